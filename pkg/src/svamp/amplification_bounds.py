"""Single-box bound chain and the epsilon thresholds it implies.

Observed chained-Bell value delta_Q  ->  true Bell value  ->  distance of the
output bit from uniform.  Thresholds are the epsilon below which that last
bound vanishes as the number of settings grows.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import bisect

from .boxes import delta_q
from .sv_source import ConditionalBounds, SvParameter, setting_prob_bounds

LOG_PI2_OVER_8 = math.log(math.pi**2 / 8)


def _log_ratio(bounds: ConditionalBounds) -> float:
    return math.log(bounds.n_settings) + bounds.log_p_min + bounds.log_zeta_min - bounds.log_p_max


def ratio_bound(bounds: ConditionalBounds) -> float:
    """Lower bound n p_min zeta_min / p_max on observed / true Bell value."""
    return math.exp(_log_ratio(bounds))


def delta_true_upper(bounds: ConditionalBounds) -> float:
    """delta_Q p_max / (n p_min zeta_min): the largest true value compatible with observing delta_Q."""
    return math.exp(math.log(delta_q(bounds.n_settings)) - _log_ratio(bounds))


def d_upper(bounds: ConditionalBounds) -> float:
    """delta_Q p_max / (2 p_min zeta_min), bounding the output bit's distance from uniform."""
    log_d = (math.log(delta_q(bounds.n_settings)) + bounds.log_p_max
             - math.log(2.0) - bounds.log_p_min - bounds.log_zeta_min)
    return math.exp(log_d)


def log_delta_big(params: SvParameter, r_bits: int) -> float:
    """Natural log of (pi^2/8) 4^{r+1} p+^{12r} / (p-^{6r} (p+^{2r} + (2^{r+1}-1) p-^{2r})^3)."""
    r = r_bits
    lm, lp = params.log_p_minus, params.log_p_plus
    # log(p+^{2r} + (2^{r+1}-1) p-^{2r}), the (2^{r+1}-1) term kept exact in log form
    a = 2 * r * lp
    b = (r + 1) * math.log(2.0) + math.log1p(-(2.0 ** -(r + 1))) + 2 * r * lm
    hi = max(a, b)
    log_sum = hi + math.log1p(math.exp(min(a, b) - hi))
    return LOG_PI2_OVER_8 + (r + 1) * math.log(4.0) + 12 * r * lp - 6 * r * lm - 3 * log_sum


def delta_big(params: SvParameter, r_bits: int) -> float:
    """The small-angle bound on d_upper with n = 2^{r+1}; may overflow to inf for huge r."""
    try:
        return math.exp(log_delta_big(params, r_bits))
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class BoundChainResult:
    epsilon: float
    r_bits: int
    n_settings: int
    ratio_lower_bound: float
    delta_true_upper: float
    d_upper: float
    delta_big: float

    def to_dict(self) -> dict:
        return asdict(self)


def bound_chain(params: SvParameter, r_bits: int, bounds: ConditionalBounds | None = None) -> BoundChainResult:
    if bounds is None:
        bounds = setting_prob_bounds(params, r_bits)
    return BoundChainResult(
        epsilon=params.epsilon,
        r_bits=r_bits,
        n_settings=bounds.n_settings,
        ratio_lower_bound=ratio_bound(bounds),
        delta_true_upper=delta_true_upper(bounds),
        d_upper=d_upper(bounds),
        delta_big=delta_big(params, r_bits),
    )


def _epsilon_from_ratio(t: float) -> float:
    # (0.5 + e) / (0.5 - e) = t
    return (t - 1.0) / (2.0 * (t + 1.0))


def threshold_epsilon1() -> float:
    """(2^{1/12} - 1) / (2 (2^{1/12} + 1)), where (p+/p-)^12 = 2."""
    return _epsilon_from_ratio(2.0 ** (1.0 / 12.0))


def binary_entropy(p: float) -> float:
    """H(p) in bits."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log(p) + (1 - p) * math.log1p(-p)) / math.log(2.0)


def solve_entropy_constant(tol: float = 1e-10) -> float:
    """The c in (0, 1) with H(c/2) = 1/2, found by bisection on (0, 1/2) where H is increasing."""
    x = bisect(lambda p: binary_entropy(p) - 0.5, 1e-12, 0.5 - 1e-12, xtol=tol / 4, rtol=4 * np.finfo(float).eps)
    return 2.0 * x


def threshold_ky_fan(tol: float = 1e-10) -> float:
    """(2^{1/(6(2-c))} - 1) / (2 (2^{1/(6(2-c))} + 1)) with c from solve_entropy_constant."""
    c = solve_entropy_constant(tol)
    return _epsilon_from_ratio(2.0 ** (1.0 / (6.0 * (2.0 - c))))

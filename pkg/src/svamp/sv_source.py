"""Santha-Vazirani sources and the probability bounds derived from source bias.

An epsilon-SV source emits bits whose conditional probability, given every
earlier bit and any prior side information, stays inside
``[0.5 - epsilon, 0.5 + epsilon]``.  Everything here that raises ``p_plus`` or
``p_minus`` to a power proportional to ``r`` is evaluated in log-space; direct
powers underflow long before the asymptotic regime (r of order 40) is reached.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

STRATEGIES = ("uniform", "extremal_bernoulli", "adversarial_table")

_TABLE_TOL = 1e-12


@dataclass(frozen=True)
class SvParameter:
    """Bias parameter of an epsilon-SV source."""

    epsilon: float

    def __post_init__(self):
        if not (0.0 <= self.epsilon < 0.5):
            raise ValueError(f"epsilon must lie in [0, 0.5), got {self.epsilon!r}")

    @property
    def p_minus(self) -> float:
        return 0.5 - self.epsilon

    @property
    def p_plus(self) -> float:
        return 0.5 + self.epsilon

    @property
    def log_p_minus(self) -> float:
        return math.log(self.p_minus)

    @property
    def log_p_plus(self) -> float:
        return math.log(self.p_plus)

    def admits(self, prob: float, tol: float = _TABLE_TOL) -> bool:
        return self.p_minus - tol <= prob <= self.p_plus + tol


def _validate_table(params: SvParameter, table: Mapping[tuple, float]) -> int:
    if not table:
        raise ValueError("adversarial_table strategy needs a non-empty table")
    depths = {len(k) for k in table}
    if len(depths) != 1:
        raise ValueError("all table keys must condition on the same number of previous bits")
    depth = depths.pop()
    if len(table) != 2**depth:
        raise ValueError(f"table conditioning on {depth} bits needs {2**depth} entries, got {len(table)}")
    for key, prob in table.items():
        if any(b not in (0, 1) for b in key):
            raise ValueError(f"table key {key!r} is not a bit tuple")
        if not params.admits(prob):
            raise ValueError(
                f"table entry {key!r} -> {prob} violates the SV condition "
                f"[{params.p_minus}, {params.p_plus}]"
            )
    return depth


class SvSource:
    """Stateful bit generator obeying the SV condition.

    ``uniform`` emits fair bits, ``extremal_bernoulli`` emits i.i.d. bits with
    P(1) = p_plus, and ``adversarial_table`` looks up P(1) from the last ``k``
    emitted bits (missing history is padded with zeros).  Every bit's
    conditional probability is recorded alongside it.
    """

    def __init__(
        self,
        params: SvParameter,
        strategy: str = "uniform",
        rng: np.random.Generator | int | None = None,
        table: Mapping[tuple, float] | None = None,
    ):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        self.params = params
        self.strategy = strategy
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.table = dict(table) if table is not None else None
        self._depth = 0
        if strategy == "adversarial_table":
            self._depth = _validate_table(params, self.table or {})
        self._history: list[int] = [0] * self._depth

    def draw(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(bits, conditional_probabilities)`` for the next ``count`` bits."""
        if count < 0:
            raise ValueError("count must be non-negative")
        if self.strategy == "adversarial_table":
            return self._draw_table(count)
        p_one = 0.5 if self.strategy == "uniform" else self.params.p_plus
        probs = np.full(count, p_one)
        bits = (self.rng.random(count) < probs).astype(np.uint8)
        return bits, probs

    def _draw_table(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        bits = np.empty(count, dtype=np.uint8)
        probs = np.empty(count)
        uniforms = self.rng.random(count)
        hist = self._history
        for t in range(count):
            key = tuple(hist[len(hist) - self._depth:]) if self._depth else ()
            p = self.table[key]
            b = int(uniforms[t] < p)
            probs[t] = p
            bits[t] = b
            if self._depth:
                hist.append(b)
                del hist[0]
        return bits, probs

    def draw_steered(self, ideal_p_one: float) -> tuple[int, float, bool]:
        """Emit one bit whose P(1) is the adversary's wish clipped to the SV range.

        Returns ``(bit, used_probability, clipped)``.
        """
        p = min(max(ideal_p_one, self.params.p_minus), self.params.p_plus)
        b = int(self.rng.random() < p)
        if self._depth:
            self._history.append(b)
            del self._history[0]
        return b, p, not math.isclose(p, ideal_p_one, abs_tol=1e-15)


@dataclass
class SvBitString:
    bits: np.ndarray
    probabilities: np.ndarray
    bias_strategy: str
    generator_state: dict = field(repr=False)

    def __len__(self):
        return len(self.bits)

    def within_bounds(self, params: SvParameter) -> bool:
        p = self.probabilities
        return bool(np.all(p >= params.p_minus - _TABLE_TOL) and np.all(p <= params.p_plus + _TABLE_TOL))


def sample_sv_bits(
    params: SvParameter,
    count: int,
    strategy: str = "uniform",
    seed: int = 0,
    table: Mapping[tuple, float] | None = None,
) -> SvBitString:
    """Draw ``count`` SV bits deterministically from ``seed``."""
    if count <= 0:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    source = SvSource(params, strategy, rng, table)
    bits, probs = source.draw(count)
    return SvBitString(bits, probs, strategy, rng.bit_generator.state)


@dataclass(frozen=True)
class ConditionalBounds:
    """Bounds on conditional setting probabilities, held as natural logs.

    ``p_min``/``p_max`` bound P(S_test = s' | S = s); ``zeta_min``/``zeta_max``
    bound the reversed conditional.  ``eta_min``/``eta_max`` are the same pair
    under the generic names used for the SV-condition on boxes.
    """

    log_p_min: float
    log_p_max: float
    log_zeta_min: float
    log_zeta_max: float
    n_settings: int
    r_bits: int
    epsilon: float
    kind: str = "plain"
    log_c_plus: float | None = None

    @property
    def p_min(self) -> float:
        return math.exp(self.log_p_min)

    @property
    def p_max(self) -> float:
        return math.exp(self.log_p_max)

    @property
    def zeta_min(self) -> float:
        return math.exp(self.log_zeta_min)

    @property
    def zeta_max(self) -> float:
        return math.exp(self.log_zeta_max)

    eta_min = zeta_min
    eta_max = zeta_max

    @property
    def c_plus(self) -> float | None:
        return None if self.log_c_plus is None else math.exp(self.log_c_plus)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "r_bits": self.r_bits,
            "n_settings": self.n_settings,
            "p_min": self.p_min,
            "p_max": self.p_max,
            "zeta_min": self.zeta_min,
            "zeta_max": self.zeta_max,
            "c_plus": self.c_plus,
            "log_p_min": self.log_p_min,
            "log_p_max": self.log_p_max,
            "log_zeta_min": self.log_zeta_min,
            "log_zeta_max": self.log_zeta_max,
        }


def _log_zeta(log_p_min: float, log_p_max: float, n_settings: int) -> tuple[float, float]:
    # with rho = (p_min/p_max)^2: zeta_min = rho/n and zeta_max = 1 - (n-1) rho/n = (1 + (n-1)(1-rho))/n,
    # the second form avoiding the cancellation when rho is close to 1
    two_delta = 2.0 * (log_p_min - log_p_max)
    log_zmin = two_delta - math.log(n_settings)
    head = 1.0 + (n_settings - 1) * -math.expm1(two_delta)
    if head <= 0.0:
        raise ValueError(
            f"zeta_max = {head / n_settings!r} <= 0: inconsistent bound bundle "
            f"(p_min={math.exp(log_p_min)}, p_max={math.exp(log_p_max)}, n={n_settings})"
        )
    return log_zmin, math.log(head) - math.log(n_settings)


def derive_conditional_bounds(p_min: float, p_max: float, n_settings: int) -> tuple[float, float]:
    """Reverse-conditional bounds: zeta_min = p_min^2 / (n p_max^2), zeta_max = 1 - (n-1) zeta_min."""
    if not (0.0 < p_min <= p_max < 1.0):
        raise ValueError(f"need 0 < p_min <= p_max < 1, got p_min={p_min}, p_max={p_max}")
    if n_settings < 2:
        raise ValueError("n_settings must be >= 2")
    lz, lzmax = _log_zeta(math.log(p_min), math.log(p_max), n_settings)
    return math.exp(lz), math.exp(lzmax)


def _check_r_n(r_bits: int, n_settings: int):
    if r_bits < 0:
        raise ValueError("r_bits must be >= 0")
    if n_settings != 2 ** (r_bits + 1):
        raise ValueError(f"n_settings must equal 2^(r_bits+1) = {2 ** (r_bits + 1)}, got {n_settings}")


def _log_c_plus(params: SvParameter, m: int | None) -> float | None:
    if m is None:
        return None
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.log2(m) * params.log_p_plus


def setting_prob_bounds(
    params: SvParameter, r_bits: int, n_settings: int | None = None, m: int | None = None
) -> ConditionalBounds:
    """Plain bounds p_min = p-^{2r}/(n p+^{2r}), p_max = p+^{2r}/(p+^{2r} + (n-1) p-^{2r}).

    ``n_settings`` defaults to 2^(r_bits+1) and must equal it when given.  If
    ``m`` is supplied the bundle also carries c_+ = p+^{log2 m}.
    """
    if n_settings is None:
        n_settings = 2 ** (r_bits + 1)
    _check_r_n(r_bits, n_settings)
    lm, lp = params.log_p_minus, params.log_p_plus
    two_r = 2 * r_bits
    # p_max = 1 / (1 + (n-1) e^t) with t = 2r log(p-/p+) <= 0, written to be exact at t = 0
    t = two_r * (lm - lp)
    log_pmin = t - math.log(n_settings)
    log_pmax = -math.log(n_settings) - math.log1p((n_settings - 1) / n_settings * math.expm1(t))
    lz, lzmax = _log_zeta(log_pmin, log_pmax, n_settings)
    return ConditionalBounds(
        log_pmin, log_pmax, lz, lzmax, n_settings, r_bits, params.epsilon, "plain",
        _log_c_plus(params, m),
    )


def ky_fan_bounds(params: SvParameter, r_bits: int, c: float | None = None, m: int | None = None) -> ConditionalBounds:
    """Large-n bounds sharpened with the Ky Fan norm.

    p_min = p-^{2r} / (p-^{2r} + 2^r p+^{(2-c)r} p-^{cr}) and symmetrically for
    p_max, where ``c`` solves H(c/2) = 1/2 (computed when omitted).
    """
    if r_bits < 1:
        raise ValueError("Ky Fan bounds need r_bits >= 1")
    if c is None:
        from .amplification_bounds import solve_entropy_constant

        c = solve_entropy_constant()
    lm, lp = params.log_p_minus, params.log_p_plus
    r = r_bits
    log2r = r * math.log(2.0)
    log_pmin = 2 * r * lm - float(np.logaddexp(2 * r * lm, log2r + (2 - c) * r * lp + c * r * lm))
    log_pmax = 2 * r * lp - float(np.logaddexp(2 * r * lp, log2r + (2 - c) * r * lm + c * r * lp))
    n = 2 ** (r + 1)
    lz, lzmax = _log_zeta(log_pmin, log_pmax, n)
    return ConditionalBounds(log_pmin, log_pmax, lz, lzmax, n, r, params.epsilon, "ky_fan", _log_c_plus(params, m))


def c_plus(params: SvParameter, m: float) -> float:
    """Upper SV bound on steering a log2(m)-bit index: p+^{log2 m}.

    Evaluated as m^{log2 p+}, the same number, which is exactly 1/m at epsilon = 0.
    Non-power-of-two ``m`` uses the real-valued logarithm.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    return float(m) ** math.log2(params.p_plus)


def c_minus(params: SvParameter, m: float) -> float:
    """Lower SV bound p-^{log2 m} on the same quantity."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return float(m) ** math.log2(params.p_minus)


def extremal_distributions(params: SvParameter, nbits: int) -> np.ndarray:
    """All extremal SV distributions over ``nbits``-bit strings.

    Each of the 2^nbits - 1 conditional nodes of the binary tree takes the
    value p- or p+; row ``j`` of the result is the distribution over strings
    (big-endian index) produced by the j-th assignment.
    """
    nodes = 2**nbits - 1
    choices = np.array([params.p_minus, params.p_plus])
    assign = np.array(np.meshgrid(*[[0, 1]] * nodes, indexing="ij")).reshape(nodes, -1).T
    p_one = choices[assign]  # (D, nodes); node index = heap order
    dists = np.ones((p_one.shape[0], 1))
    for depth in range(nbits):
        start = 2**depth - 1
        p = p_one[:, start:start + 2**depth]
        dists = np.stack([dists * (1 - p), dists * p], axis=2).reshape(p_one.shape[0], -1)
    return dists


def bernoulli_table(params: SvParameter, pattern: Sequence[int]) -> dict[tuple, float]:
    """Table whose P(1) after history ``h`` is p+ if pattern[h] else p-."""
    depth = int(math.log2(len(pattern)))
    if 2**depth != len(pattern):
        raise ValueError("pattern length must be a power of two")
    keys = [tuple(int(b) for b in np.binary_repr(i, depth)) if depth else () for i in range(len(pattern))]
    return {k: (params.p_plus if flag else params.p_minus) for k, flag in zip(keys, pattern)}

"""Symmetric attacks on the amplification protocol and the LP bounding them.

An adversary supplies ``m`` boxes (one per tested run).  A sequence of *type
j* holds ``j`` bad boxes, each contradicting the ideal correlation on exactly
one of ``n`` edges, and every type-j sequence is equally likely, so
P_j = C(m, j) n^j r_j.  The final index ``f`` is steered uniformly onto the
bad boxes, but only as far as the SV bound on ``f`` allows given what the
honest parties measured (the *cloud*).  Maximising the acceptance
probability sum_k P_k a^k under those constraints is a small LP whose
optimum has a two-point closed form.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import gammaln

from .simplex import simplex
from .sv_source import SvParameter, c_minus, c_plus, setting_prob_bounds

SUM_TOL = 1e-12
SLACK_TOL = 1e-9
EXACT_BINOMIAL_MAX = 60


def _log_comb(n: int, k: int) -> float:
    if n <= EXACT_BINOMIAL_MAX:
        return math.log(math.comb(n, k))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@dataclass(frozen=True)
class AttackParams:
    """m runs, n edges, per-run non-detection probability a, steering bound c_plus.

    ``log_detect`` is log(1 - a), kept so that a stays meaningful when 1 - a
    is far below double precision.
    """

    m: int
    n: int
    a: float
    c_plus: float
    log_detect: float | None = None
    epsilon: float | None = None
    r_bits: int | None = None
    m_exponent: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0.0 < self.c_plus <= 1.0:
            raise ValueError(f"c_plus must be in (0, 1], got {self.c_plus}")
        if self.log_detect is None:
            if not 0.0 < self.a < 1.0:
                raise ValueError(f"a must be in (0, 1), got {self.a}")
            object.__setattr__(self, "log_detect", math.log1p(-self.a))
        elif not (math.isfinite(self.log_detect) and self.log_detect < 0.0):
            raise ValueError(f"1 - a = exp({self.log_detect}) must lie in (0, 1)")

    @property
    def detect(self) -> float:
        return math.exp(self.log_detect)

    @property
    def log_a(self) -> float:
        return math.log1p(-self.detect)

    @property
    def dual_precondition(self) -> bool:
        """(1 - a) <= 1/n, needed by the dual feasibility argument."""
        return self.log_detect <= -math.log(self.n) + 1e-12

    def to_dict(self) -> dict:
        return {
            "m": self.m, "n": self.n, "a": self.a, "c_plus": self.c_plus,
            "one_minus_a": self.detect, "epsilon": self.epsilon, "r_bits": self.r_bits,
            "m_exponent": self.m_exponent, "dual_precondition": self.dual_precondition,
        }


def derive_attack_params(
    params: SvParameter, r_bits: int, m_exponent: float = 1.99, m: int | None = None
) -> AttackParams:
    """n = 2^{r+1}, m = round((n/2)^{m_exponent}), a = 1 - p_min zeta_min / p_max, c_+ = p+^{log2 m}."""
    if r_bits < 1:
        raise ValueError("r_bits must be >= 1")
    bounds = setting_prob_bounds(params, r_bits)
    n = bounds.n_settings
    if m is None:
        m = max(1, round((n / 2) ** m_exponent))
    log_detect = bounds.log_p_min + bounds.log_zeta_min - bounds.log_p_max
    if not (math.isfinite(log_detect) and log_detect < 0.0):
        raise ValueError(f"derived a = 1 - exp({log_detect}) is not in (0, 1)")
    a = -math.expm1(log_detect)
    return AttackParams(m, n, a, c_plus(params, m), log_detect, params.epsilon, r_bits, m_exponent)


# --- ensembles and clouds --------------------------------------------------


@dataclass(frozen=True)
class AttackEnsemble:
    """Type probabilities P_1..P_m of a symmetric single-contradiction attack."""

    n: int
    type_probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.type_probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("type_probs must be a non-empty vector (P_1..P_m)")
        if np.any(p < -SUM_TOL):
            raise ValueError("type probabilities must be non-negative")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"type probabilities sum to {p.sum()!r}, not 1 (P_0 must be 0)")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "type_probs", p)

    @property
    def m(self) -> int:
        return self.type_probs.size

    def log_multiplicity(self) -> np.ndarray:
        """log(C(m, j) n^j) for j = 1..m, the number of type-j sequences."""
        m = self.m
        return np.array([_log_comb(m, j) + j * math.log(self.n) for j in range(1, m + 1)])

    @property
    def per_sequence_weights(self) -> np.ndarray:
        """r_j = P_j / (C(m, j) n^j); zero where P_j is zero."""
        with np.errstate(divide="ignore"):
            log_r = np.log(self.type_probs) - self.log_multiplicity()
        return np.exp(log_r)

    @classmethod
    def from_sequence_weights(cls, r: Sequence[float], n: int) -> "AttackEnsemble":
        r = np.asarray(r, dtype=float)
        m = r.size
        mult = np.exp([_log_comb(m, j) + j * math.log(n) for j in range(1, m + 1)])
        return cls(n, r * mult)

    @classmethod
    def single_type(cls, m: int, j: int, n: int) -> "AttackEnsemble":
        if not 1 <= j <= m:
            raise ValueError(f"type {j} out of range 1..{m}")
        p = np.zeros(m)
        p[j - 1] = 1.0
        return cls(n, p)

    def sample_sequence(self, rng: np.random.Generator) -> np.ndarray:
        """One box sequence: 0 for an ideal box, else the contradicted edge (1..n)."""
        j = int(rng.choice(self.m, p=self.type_probs)) + 1
        seq = np.zeros(self.m, dtype=np.int64)
        pos = rng.choice(self.m, size=j, replace=False)
        seq[pos] = rng.integers(1, self.n + 1, size=j)
        return seq


@dataclass(frozen=True)
class Cloud:
    """Box sequences compatible with a detection pattern for fixed measured edges."""

    detection_pattern: tuple[int, ...]
    measured_edges: tuple[int, ...]

    @property
    def k(self) -> int:
        return sum(self.detection_pattern)

    @property
    def detected_edges(self) -> dict[int, int]:
        return {i: e for i, (l, e) in enumerate(zip(self.detection_pattern, self.measured_edges)) if l}

    def contains(self, sequence: Sequence[int]) -> bool:
        for l, e, box in zip(self.detection_pattern, self.measured_edges, sequence):
            if l and box != e:
                return False
            if not l and box == e:
                return False
        return True


def cloud_probability(ensemble: AttackEnsemble, k: int, n: int | None = None) -> float:
    """Q_k = sum_s C(m-k, s) (n-1)^s r_{k+s}: probability of one cloud with k detections."""
    n = ensemble.n if n is None else n
    m = ensemble.m
    if not 1 <= k <= m:
        raise ValueError(f"k must be in 1..{m}, got {k}")
    r = ensemble.per_sequence_weights
    return float(sum(math.comb(m - k, s) * (n - 1) ** s * r[k + s - 1] for s in range(m - k + 1)))


def acceptance_probability(ensemble: AttackEnsemble, a: float) -> float:
    """P(ACC) = sum_k P_k a^k."""
    k = np.arange(1, ensemble.m + 1)
    return float(ensemble.type_probs @ np.power(a, k))


# --- the linear program ----------------------------------------------------


@dataclass(frozen=True)
class LpStandardForm:
    """max objective.x  s.t.  constraint_matrix x <= rhs, x >= 0 with x = (P_1..P_m)."""

    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    params: AttackParams
    include_lower: bool = False


def _sv_rows(m: int, n: int, bound: float) -> np.ndarray:
    """Row k, column j: C(j, j-k) ((n-1)/n)^{j-k} (1/j - bound) for j >= k."""
    log_q = math.log((n - 1) / n)
    rows = np.zeros((m, m))
    for k in range(1, m + 1):
        for j in range(k, m + 1):
            rows[k - 1, j - 1] = math.exp(_log_comb(j, j - k) + (j - k) * log_q) * (1.0 / j - bound)
    return rows


def lp_constraints(params: AttackParams, include_lower: bool = False) -> LpStandardForm:
    """Assemble the acceptance-probability LP.

    With ``include_lower`` the lower SV bound P(f=i | cloud) >= p-^{log2 m} is
    added as m extra rows after the normalisation rows; it is off by default.
    """
    m, n = params.m, params.n
    upper = _sv_rows(m, n, params.c_plus)
    blocks = [upper, np.ones((1, m)), -np.ones((1, m))]
    rhs = [np.zeros(m), [1.0], [-1.0]]
    if include_lower:
        if params.epsilon is None:
            raise ValueError("lower-side constraints need params.epsilon")
        blocks.append(-_sv_rows(m, n, c_minus(SvParameter(params.epsilon), m)))
        rhs.append(np.zeros(m))
    objective = np.exp(params.log_a * np.arange(1, m + 1))
    return LpStandardForm(objective, np.vstack(blocks), np.concatenate(rhs), params, include_lower)


@dataclass
class LpSolution:
    status: str
    primal_vector: np.ndarray | None
    optimal_value: float | None
    dual_vector: np.ndarray | None
    dual_value: float | None = None
    max_primal_violation: float | None = None
    min_dual_slack: float | None = None
    complementary_slackness: float | None = None
    iterations: int = 0
    method: str = "simplex"
    support: dict[int, float] | None = None  # non-zero P_k, 1-based

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "method": self.method,
            "support": None if self.support is None else {str(k): v for k, v in self.support.items()},
            "primal": None if self.primal_vector is None else self.primal_vector.tolist(),
            "value": self.optimal_value,
            "dual": None if self.dual_vector is None else self.dual_vector.tolist(),
            "dual_value": self.dual_value,
            "max_primal_violation": self.max_primal_violation,
            "min_dual_slack": self.min_dual_slack,
            "complementary_slackness": self.complementary_slackness,
        }


def simplex_solve(lp: LpStandardForm) -> LpSolution:
    """Solve with Bland-rule simplex and report primal/dual certificate residuals."""
    A, b, c = lp.constraint_matrix, lp.rhs, lp.objective
    res = simplex(c, A, b)
    if res.status != "optimal":
        return LpSolution(res.status, None, None, None, iterations=res.iterations)
    x, y = res.x, res.y
    row_slack = b - A @ x
    dual_slack = A.T @ y - c
    cs = max(float(np.max(np.abs(y * row_slack))), float(np.max(np.abs(x * dual_slack))))
    sol = LpSolution(
        "optimal", x, res.value, y,
        dual_value=float(b @ y),
        max_primal_violation=float(max(0.0, -row_slack.min(), -x.min())),
        min_dual_slack=float(min(dual_slack.min(), y.min())),
        complementary_slackness=cs,
        iterations=res.iterations,
        support={int(k) + 1: float(x[k]) for k in np.flatnonzero(x)},
    )
    if (sol.max_primal_violation > SLACK_TOL or sol.min_dual_slack < -SLACK_TOL
            or abs(sol.dual_value - sol.optimal_value) > SLACK_TOL):
        sol.status = "inaccurate"
    return sol


# --- closed forms ----------------------------------------------------------


def _inverse_c(params: AttackParams) -> tuple[float, int | None]:
    """1/c_+ and, when it is an integer up to rounding noise, that integer."""
    inv = 1.0 / params.c_plus
    nearest = round(inv)
    if abs(inv - nearest) <= 1e-9 * max(1.0, inv):
        return inv, int(nearest)
    return inv, None


@dataclass(frozen=True)
class ClosedFormOptimum:
    m: int
    support: dict[int, float]
    value: float
    u: int
    v: int | None
    power_bound: float  # a^{1/c_+}

    def vector(self) -> np.ndarray:
        x = np.zeros(self.m)
        for k, p in self.support.items():
            x[k - 1] = p
        return x

    def ensemble(self, n: int) -> AttackEnsemble:
        return AttackEnsemble(n, self.vector())


def closed_form_optimum(params: AttackParams) -> ClosedFormOptimum:
    """Two-point optimum on types u = floor(1/c_+) and v = u + 1.

    When 1/c_+ is an integer all mass sits on u and the value is a^{1/c_+};
    when v would exceed m the result is P_m = 1.  If 1/c_+ > m that point
    violates every SV row (the LP is infeasible); derived parameters always
    have c_+ >= 1/m, so this only arises for hand-built ones.
    """
    m, n, c, log_a = params.m, params.n, params.c_plus, params.log_a
    inv, exact = _inverse_c(params)
    power_bound = math.exp(inv * log_a)
    if exact is not None and exact <= m:
        u = exact
        return ClosedFormOptimum(m, {u: 1.0}, math.exp(u * log_a), u, u + 1 if u < m else None, power_bound)
    u = math.floor(inv)
    v = u + 1
    if v > m:
        return ClosedFormOptimum(m, {m: 1.0}, math.exp(m * log_a), m, None, power_bound)
    s = u * n * (c - 1.0 / u) / (v * (n - 1) * (1.0 / v - c))
    pu, pv = 1.0 / (1.0 + s), s / (1.0 + s)
    value = pu * math.exp(u * log_a) + pv * math.exp(v * log_a)
    return ClosedFormOptimum(m, {u: pu, v: pv}, value, u, v, power_bound)


def primal_row_residuals(params: AttackParams, support: Mapping[int, float]) -> np.ndarray:
    """SV rows k = 1..max(support) at a sparse P, in units of steering probability.

    Row k is divided by sum_j C(j, k) q^{j-k} P_j, the same sum without the
    (1/j - c_+) factors, so a value above zero is how far P(f = i | cloud)
    exceeds c_+.  Evaluated term by term in log space, so it works for any m.
    """
    log_q = math.log((params.n - 1) / params.n)
    top = max(support)
    k = np.arange(1, top + 1, dtype=float)
    logs, gains = [], []
    for j, p in support.items():
        if p == 0.0:
            continue
        with np.errstate(invalid="ignore"):
            lt = gammaln(j + 1) - gammaln(k + 1) - gammaln(j - k + 1) + (j - k) * log_q
        logs.append(np.where(k <= j, lt + math.log(p), -np.inf))
        gains.append(1.0 / j - params.c_plus)
    if not logs:
        return np.zeros(top)
    logs = np.array(logs)
    peak = logs.max(axis=0)
    live = np.isfinite(peak)
    w = np.zeros_like(logs)
    w[:, live] = np.exp(logs[:, live] - peak[live])
    out = np.zeros(top)
    out[live] = (w[:, live] * np.array(gains)[:, None]).sum(axis=0) / w[:, live].sum(axis=0)
    return out


@dataclass
class DualCertificate:
    form: str
    y1: float
    y_accept: float  # y_{m+1}
    objective: float
    min_slack: float
    argmin_k: int
    violations: list[int] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.min_slack >= -SLACK_TOL and self.y1 >= 0.0

    def vector(self, m: int) -> np.ndarray:
        y = np.zeros(m + 2)
        y[0], y[m] = self.y1, self.y_accept
        return y

    def to_dict(self) -> dict:
        return {
            "form": self.form, "y1": self.y1, "y_m_plus_1": self.y_accept, "y_m_plus_2": 0.0,
            "objective": self.objective, "min_slack": self.min_slack, "argmin_k": self.argmin_k,
            "feasible": self.feasible, "violations": self.violations,
        }


def dual_slacks(params: AttackParams, y1: float, y_accept: float) -> np.ndarray:
    """(A^T y - c)_k for y supported on y_1 and y_{m+1}.

    Column k of the SV block has C(k, k-1) q^{k-1} (1/k - c_+) = q^{k-1} (1 - k c_+)
    in row 1, the only non-zero dual coordinate among the first m.
    """
    k = np.arange(1, params.m + 1, dtype=float)
    log_q = math.log((params.n - 1) / params.n)
    alpha = np.exp((k - 1) * log_q) * (1.0 - k * params.c_plus)
    return alpha * y1 + y_accept - np.exp(k * params.log_a)


def dual_certificate(params: AttackParams, form: str = "corrected") -> DualCertificate:
    """Dual vector with only y_1 and y_{m+1} non-zero, checked against every dual constraint.

    ``form``:
      * ``"proof"``: y_1 = a^{1/c}(1-a) / (c q^{1/c}), y_{m+1} = a^{1/c} with real 1/c
        (the pair that makes the constraints at k = 1/c and 1/c + 1 tight);
      * ``"corrected"``: the same construction at the integers u = floor(1/c),
        v = u + 1, whose objective equals the two-point primal value;
        identical to ``"proof"`` when 1/c is an integer;
      * ``"displayed"``: y_1 with denominator (1/c + 1) q^{1/c}, kept for comparison.
    """
    if not params.dual_precondition:
        raise ValueError(
            f"dual certificate needs (1 - a) <= 1/n, got 1 - a = {params.detect!r} > 1/{params.n}"
        )
    c, log_a = params.c_plus, params.log_a
    log_q = math.log((params.n - 1) / params.n)
    one_minus_a = params.detect
    inv, exact = _inverse_c(params)
    if form == "proof" or (form == "corrected" and exact is not None):
        e = float(exact) if exact is not None else inv
        y_acc = math.exp(e * log_a)
        y1 = y_acc * one_minus_a / (c * math.exp(e * log_q))
    elif form == "corrected":
        u = math.floor(inv)
        v = u + 1
        if v > params.m:
            raise ValueError("1/c_+ exceeds m; the boundary optimum P_m = 1 has no two-point dual")
        alpha_u = math.exp((u - 1) * log_q) * (1.0 - u * c)
        alpha_v = math.exp((v - 1) * log_q) * (1.0 - v * c)
        au, av = math.exp(u * log_a), math.exp(v * log_a)
        y1 = (au - av) / (alpha_u - alpha_v)
        y_acc = au - alpha_u * y1
    elif form == "displayed":
        y_acc = math.exp(inv * log_a)
        y1 = y_acc * one_minus_a / ((inv + 1.0) * math.exp(inv * log_q))
    else:
        raise ValueError(f"unknown dual form {form!r}")
    slack = dual_slacks(params, y1, y_acc)
    i = int(np.argmin(slack))
    violations = [int(k) + 1 for k in np.flatnonzero(slack < -SLACK_TOL)]
    return DualCertificate(form, y1, y_acc, y_acc, float(slack[i]), i + 1, violations)


SIMPLEX_MAX_M = 100


def certify_closed_form(params: AttackParams) -> LpSolution:
    """Optimality of the two-point solution by weak duality, without a dense LP.

    The primal point is checked row by row in log space and the dual vector
    against every dual constraint; equal objectives certify optimality.
    """
    opt = closed_form_optimum(params)
    resid = primal_row_residuals(params, opt.support)
    total = sum(opt.support.values())
    viol = max(0.0, float(resid.max()), abs(total - 1.0))
    dual_value, min_slack, dual = None, None, None
    if params.dual_precondition:
        try:
            cert = dual_certificate(params, "corrected")
        except ValueError:
            pass  # 1/c_+ > m: boundary optimum without a two-point dual
        else:
            dual_value, min_slack = cert.objective, min(cert.min_slack, cert.y1)
            dual = (cert.y1, cert.y_accept)
    ok = viol <= SLACK_TOL and min_slack is not None and min_slack >= -SLACK_TOL \
        and abs(dual_value - opt.value) <= SLACK_TOL
    sol = LpSolution(
        "optimal" if ok else "uncertified", None, opt.value,
        None if dual is None else np.array(dual),
        dual_value=dual_value, max_primal_violation=viol, min_dual_slack=min_slack,
        complementary_slackness=None if dual_value is None else abs(dual_value - opt.value),
        method="certificate", support=dict(opt.support),
    )
    return sol


def solve_lp(params: AttackParams, method: str = "auto", include_lower: bool = False) -> LpSolution:
    """Dense simplex for m <= SIMPLEX_MAX_M, otherwise the closed-form certificate.

    ``auto`` also falls back to the certificate when the simplex basis fails its
    own dual check.

    Beyond about a hundred types the SV rows span hundreds of orders of
    magnitude and a double-precision tableau can no longer resolve them.
    """
    if method == "auto":
        if include_lower:
            return simplex_solve(lp_constraints(params, include_lower))
        if params.m <= SIMPLEX_MAX_M:
            sol = simplex_solve(lp_constraints(params))
            if sol.status == "optimal":
                return sol
            # degenerate bases near m = 100 can leave a dual entry slightly negative
            cert = certify_closed_form(params)
            return cert if cert.status == "optimal" else sol
        return certify_closed_form(params)
    if method == "simplex":
        return simplex_solve(lp_constraints(params, include_lower))
    if method == "certificate":
        if include_lower:
            raise ValueError("the closed-form certificate covers the upper-bound LP only")
        return certify_closed_form(params)
    raise ValueError(f"unknown method {method!r}")


def threshold_epsilon2(m_exponent: float = 1.99, xtol: float = 1e-15) -> float:
    """Root in (0, 1/2) of (0.5 - e)^12 = 2 (0.5 + e)^{12 + m_exponent}."""
    expo = 12.0 + m_exponent
    return bisect(lambda e: (0.5 - e) ** 12 - 2.0 * (0.5 + e) ** expo, 0.0, 0.5, xtol=xtol, rtol=4 * np.finfo(float).eps)


# --- exhaustive cloud oracle -----------------------------------------------

ORACLE_MAX_M = 6
ORACLE_MAX_N = 4


@dataclass
class CloudOracleReport:
    m: int
    n: int
    measured_edges: tuple[int, ...]
    q_enumerated: dict[int, float]
    q_formula: dict[int, float]
    steer_enumerated: dict[int, float]  # P(f = detected i | cloud with k detections)
    steer_formula: dict[int, float]
    residual_enumerated: dict[int, float]  # sum_{seq in cloud} (P(f=i|seq) - c_+) P(seq)
    residual_lp: dict[int, float]  # LP row k at P, divided by C(m, k) n^k
    cloud_spread: float  # largest disagreement between clouds with the same k
    clouds_checked: int

    def max_q_error(self) -> float:
        return max(abs(self.q_enumerated[k] - self.q_formula[k]) for k in self.q_formula)

    def max_residual_error(self) -> float:
        return max(abs(self.residual_enumerated[k] - self.residual_lp[k]) for k in self.residual_lp)

    def max_steer_error(self) -> float:
        return max(abs(self.steer_enumerated[k] - self.steer_formula[k]) for k in self.steer_formula)

    def to_dict(self) -> dict:
        keys = sorted(self.q_formula)
        return {
            "m": self.m, "n": self.n, "measured_edges": list(self.measured_edges),
            "rows": [
                {"k": k, "q_enumerated": self.q_enumerated[k], "q_formula": self.q_formula[k],
                 "residual_enumerated": self.residual_enumerated[k], "residual_lp": self.residual_lp[k],
                 "steer_enumerated": self.steer_enumerated[k], "steer_formula": self.steer_formula[k]}
                for k in keys
            ],
            "max_q_error": self.max_q_error(),
            "max_residual_error": self.max_residual_error(),
            "max_steer_error": self.max_steer_error(),
            "cloud_spread": self.cloud_spread,
            "clouds_checked": self.clouds_checked,
        }


def enumerate_sequences(m: int, n: int) -> np.ndarray:
    """Every box sequence as rows of labels 0 (ideal) or 1..n (contradicted edge)."""
    return np.array(list(itertools.product(range(n + 1), repeat=m)), dtype=np.int64)


def brute_force_cloud_oracle(
    params: AttackParams, ensemble: AttackEnsemble, measured_edges: Sequence[int] | None = None
) -> CloudOracleReport:
    """Enumerate every sequence and every detection pattern and apply Bayes to the f-rule.

    P(f = i | seq) = 1/(#bad boxes) on bad positions, 0 elsewhere.  For each
    cloud the enumerated P(f = i | cloud) at a detected position, the cloud
    probability and the constraint residual are compared with the formulas
    and with LP row k evaluated at the ensemble's P.
    """
    m, n = params.m, params.n
    if m > ORACLE_MAX_M or n > ORACLE_MAX_N:
        raise ValueError(f"exhaustive regime is m <= {ORACLE_MAX_M}, n <= {ORACLE_MAX_N}; got m={m}, n={n}")
    if ensemble.m != m or ensemble.n != n:
        raise ValueError("ensemble shape does not match params")
    if measured_edges is None:
        measured_edges = tuple((i % n) + 1 for i in range(m))
    measured = np.asarray(measured_edges, dtype=np.int64)
    if measured.shape != (m,) or measured.min() < 1 or measured.max() > n:
        raise ValueError("measured_edges must give one edge in 1..n per run")

    seqs = enumerate_sequences(m, n)
    nbad = (seqs > 0).sum(axis=1)
    r_ext = np.concatenate([[0.0], ensemble.per_sequence_weights])  # P_0 = 0
    weight = r_ext[nbad]
    detected = seqs == measured[None, :]
    pattern_id = detected.astype(np.int64) @ (1 << np.arange(m))
    inv_bad = np.where(nbad > 0, 1.0 / np.maximum(nbad, 1), 0.0)

    lp = lp_constraints(params)
    rows_at_p = lp.constraint_matrix[:m] @ ensemble.type_probs
    log_n = math.log(n)

    per_k: dict[int, list[tuple[float, float, float]]] = {}
    clouds = 0
    for pid in range(1, 1 << m):
        k = bin(pid).count("1")
        mask = pattern_id == pid
        w = weight[mask]
        q = float(w.sum())
        resid = float((w * (inv_bad[mask] - params.c_plus)).sum())
        steer = float((w * inv_bad[mask]).sum()) / q if q > 0 else float("nan")
        per_k.setdefault(k, []).append((q, resid, steer))
        clouds += 1

    q_enum, res_enum, steer_enum = {}, {}, {}
    spread = 0.0
    for k, vals in per_k.items():
        arr = np.array(vals)
        q_enum[k], res_enum[k], steer_enum[k] = arr[0]
        spread = max(spread, float(np.nanmax(np.ptp(arr, axis=0))))

    r = ensemble.per_sequence_weights
    q_form, steer_form, res_lp = {}, {}, {}
    for k in range(1, m + 1):
        q_form[k] = cloud_probability(ensemble, k)
        num = sum(math.comb(m - k, s) * (n - 1) ** s * r[k + s - 1] / (k + s) for s in range(m - k + 1))
        steer_form[k] = num / q_form[k] if q_form[k] > 0 else float("nan")
        res_lp[k] = float(rows_at_p[k - 1] / math.exp(_log_comb(m, k) + k * log_n))
    # clouds with zero mass have undefined steering; compare only where defined
    for k in list(steer_form):
        if q_form[k] == 0.0:
            steer_form[k] = steer_enum[k] = 0.0
    return CloudOracleReport(m, n, tuple(int(e) for e in measured), q_enum, q_form, steer_enum,
                             steer_form, res_enum, res_lp, spread, clouds)


# --- symmetrisation of multi-contradiction attacks -------------------------


@dataclass(frozen=True)
class RawEnsemble:
    """Box sequences listed by each run's contradiction-edge set, with their masses."""

    n: int
    entries: tuple[tuple[tuple[frozenset, ...], float], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("raw ensemble is empty")
        lengths = {len(seq) for seq, _ in self.entries}
        if len(lengths) != 1:
            raise ValueError("all sequences must have the same length m")
        total = 0.0
        for seq, mass in self.entries:
            if mass < 0:
                raise ValueError("masses must be non-negative")
            for edges in seq:
                if any(not 1 <= e <= self.n for e in edges):
                    raise ValueError(f"edge set {set(edges)} has edges outside 1..{self.n}")
            if mass > 0 and all(len(edges) == 0 for edges in seq):
                raise ValueError("an all-ideal sequence cannot carry mass (P_0 = 0)")
            total += mass
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"masses sum to {total}, not 1")

    @classmethod
    def from_lists(cls, n: int, entries: Sequence[tuple[Sequence[Sequence[int]], float]]) -> "RawEnsemble":
        return cls(n, tuple((tuple(frozenset(e) for e in seq), float(w)) for seq, w in entries))

    @property
    def m(self) -> int:
        return len(self.entries[0][0])

    def acceptance(self) -> float:
        """P(no contradiction measured) with each run's edge uniform over n."""
        return float(sum(w * math.prod(1.0 - len(e) / self.n for e in seq) for seq, w in self.entries))


def split_contradictions(raw: RawEnsemble) -> dict[tuple[int, ...], float]:
    """Replace each k-contradiction box by one of its k single-contradiction boxes, each w.p. 1/k."""
    out: dict[tuple[int, ...], float] = {}
    for seq, mass in raw.entries:
        options = [sorted(e) if e else [0] for e in seq]
        share = mass / math.prod(len(o) for o in options)
        for choice in itertools.product(*options):
            out[choice] = out.get(choice, 0.0) + share
    return out


def symmetrize_attack(raw: RawEnsemble) -> AttackEnsemble:
    """Symmetric single-contradiction ensemble obtained from a raw multi-contradiction one."""
    single = split_contradictions(raw)
    probs = np.zeros(raw.m)
    for seq, mass in single.items():
        j = sum(1 for b in seq if b)
        probs[j - 1] += mass
    return AttackEnsemble(raw.n, probs)

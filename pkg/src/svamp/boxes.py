"""No-signaling boxes restricted to the edges of the chained Bell scenario.

Settings are numbered 1..n; Alice holds the odd ones, Bob the even ones.
Edge ``i < n`` joins settings ``i`` and ``i + 1``, edge ``n`` joins 1 and n.
Each edge carries a 2x2 table over (x, y) = (Alice outcome, Bob outcome),
stored row-major as ``[p00, p01, p10, p11]``.  The ideal correlation is
``x == y`` on edges ``1..n-1`` and ``x != y`` on edge ``n``; an outcome that
breaks it is a *contradiction* and is what the Bell indicator counts.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

CONSTRUCTION_TOL = 1e-12
CHECK_TOL = 1e-9

# outcome index -> (x, y)
OUTCOMES = ((0, 0), (0, 1), (1, 0), (1, 1))
_XOR = np.array([0, 1, 1, 0])


def _check_n(n: int):
    if not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
        raise ValueError(f"n must be an even integer >= 2, got {n!r}")


def bell_indicator(n: int) -> np.ndarray:
    """(n, 4) 0/1 matrix: 1 where the outcome contradicts the ideal correlation."""
    _check_n(n)
    ind = np.tile(_XOR, (n, 1))
    ind[n - 1] = 1 - _XOR
    return ind


def edge_settings(n: int, edge: int) -> tuple[int, int]:
    """(alice_setting, bob_setting) measured on ``edge`` (1-based)."""
    if edge == n:
        return 1, n
    lo, hi = edge, edge + 1
    return (lo, hi) if lo % 2 else (hi, lo)


def edge_of(n: int, u: int, v: int) -> int | None:
    """Chain edge for Alice setting ``u`` and Bob setting ``v``, or None off the chain."""
    if abs(u - v) == 1:
        return min(u, v)
    if (u, v) == (1, n):
        return n
    return None


@dataclass(frozen=True)
class ChainBox:
    """Per-edge outcome distributions of a box on the n-cycle of settings."""

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_n(self.n)
        edges = np.array(self.edges, dtype=float).reshape(self.n, 4)
        if np.any(edges < -CHECK_TOL):
            raise ValueError("edge tables must be non-negative")
        sums = edges.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > CHECK_TOL)
        if bad.size:
            raise ValueError(f"edge tables {list(bad + 1)} do not sum to 1 (sums {sums[bad]})")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    def table(self, edge: int) -> np.ndarray:
        """2x2 array P(x, y) on ``edge`` (1-based)."""
        return self.edges[edge - 1].reshape(2, 2)

    def error_masses(self) -> np.ndarray:
        """Probability of a contradiction on each edge."""
        return (self.edges * bell_indicator(self.n)).sum(axis=1)

    def to_json(self) -> str:
        return json.dumps({"n": int(self.n), "edges": self.edges.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ChainBox":
        data = json.loads(text)
        return cls(int(data["n"]), np.asarray(data["edges"], dtype=float))

    def allclose(self, other: "ChainBox", atol: float = CONSTRUCTION_TOL) -> bool:
        return self.n == other.n and bool(np.allclose(self.edges, other.edges, rtol=0, atol=atol))


def _correlated(err: float) -> np.ndarray:
    return np.array([(1 - err) / 2, err / 2, err / 2, (1 - err) / 2])


def _box_from_errors(n: int, errors: Sequence[float]) -> ChainBox:
    """Uniform-marginal box whose edge ``i`` contradicts with probability errors[i-1]."""
    edges = np.array([_correlated(e) for e in errors])
    edges[n - 1] = edges[n - 1][[1, 0, 3, 2]]
    return ChainBox(n, edges)


def ideal_box(n: int) -> ChainBox:
    """Perfect correlations on edges 1..n-1, perfect anti-correlation on edge n."""
    _check_n(n)
    return _box_from_errors(n, [0.0] * n)


def flipped_box(n: int, edges: Sequence[int]) -> ChainBox:
    """Ideal box with the correlation flipped on every edge in ``edges``."""
    _check_n(n)
    errs = [0.0] * n
    for e in edges:
        if not 1 <= e <= n:
            raise ValueError(f"edge {e} out of range 1..{n}")
        errs[e - 1] = 1.0
    return _box_from_errors(n, errs)


def bad_box(n: int, contradiction_edge: int) -> ChainBox:
    """Single-contradiction box: ideal except on ``contradiction_edge``.

    It is the even mixture of a local deterministic assignment and its
    complement, so marginals stay uniform.
    """
    _check_n(n)
    if not 1 <= contradiction_edge <= n:
        raise ValueError(f"contradiction_edge must be in 1..{n}, got {contradiction_edge}")
    return flipped_box(n, [contradiction_edge])


def delta_q(n: int) -> float:
    """Optimal quantum value sin^2(pi / 2n) of the chained Bell expression."""
    return math.sin(math.pi / (2 * n)) ** 2


def quantum_box(n: int) -> ChainBox:
    """Uniform-marginal box with edge error sin^2(pi/2n) everywhere."""
    _check_n(n)
    return _box_from_errors(n, [delta_q(n)] * n)


def mix(boxes: Sequence[ChainBox], weights: Sequence[float]) -> ChainBox:
    """Edgewise convex combination."""
    if len(boxes) == 0 or len(boxes) != len(weights):
        raise ValueError("need one weight per box")
    n = boxes[0].n
    if any(b.n != n for b in boxes):
        raise ValueError("all boxes must share the same n")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > CONSTRUCTION_TOL:
        raise ValueError(f"weights must be a probability vector, got {list(w)}")
    return ChainBox(n, np.tensordot(w, np.stack([b.edges for b in boxes]), axes=1))


@dataclass
class SignalingReport:
    ok: bool
    violations: list[dict]

    def __bool__(self):
        return self.ok


def _marginal(box: ChainBox, edge: int, party: str) -> np.ndarray:
    t = box.table(edge)
    return t.sum(axis=1) if party == "alice" else t.sum(axis=0)


def check_no_signaling(box: ChainBox, tol: float = CHECK_TOL) -> SignalingReport:
    """Compare each setting's marginal across the two chain edges that contain it."""
    n = box.n
    violations = []
    for s in range(1, n + 1):
        e_prev, e_next = (s - 1 if s > 1 else n), s
        party = "alice" if s % 2 else "bob"
        gap = float(np.max(np.abs(_marginal(box, e_prev, party) - _marginal(box, e_next, party))))
        if gap > tol:
            violations.append({"setting": s, "party": party, "edges": (e_prev, e_next), "magnitude": gap})
    return SignalingReport(not violations, violations)


def true_bell_value(box: ChainBox) -> float:
    """Chained Bell value under independent uniform edge choice."""
    return float(box.error_masses().mean())


def observed_bell_value(
    boxes_by_source: Mapping[int, ChainBox], source_dist: Mapping[int, float]
) -> float:
    """Bell value when source value ``s`` both selects the box and is used as input edge ``s``."""
    if set(boxes_by_source) != set(source_dist):
        raise ValueError("boxes_by_source and source_dist must share the same source values")
    total = sum(source_dist.values())
    if abs(total - 1.0) > CHECK_TOL:
        raise ValueError(f"source_dist sums to {total}, not 1")
    value = 0.0
    for s, p in source_dist.items():
        box = boxes_by_source[s]
        if not 1 <= s <= box.n:
            raise ValueError(f"source value {s} is not an edge of the n={box.n} chain")
        value += p * box.error_masses()[s - 1]
    return float(value)


def randomness_distance(box: ChainBox) -> float:
    """max_i of (|p_i(0) - 1/2| + |p_i(1) - 1/2|) / 2.

    p_i(x) is P(x, x) on edges i < n and P(x, 1 - x) on edge n.
    """
    e = box.edges
    p = np.empty((box.n, 2))
    p[:, 0], p[:, 1] = e[:, 0], e[:, 3]
    p[-1] = e[-1, 1], e[-1, 2]
    return float((0.5 * np.abs(p - 0.5).sum(axis=1)).max())


@dataclass(frozen=True)
class BoxDecomposition:
    lam: float
    bad_weights: np.ndarray

    def reconstruct(self, n: int) -> ChainBox:
        boxes = [ideal_box(n)] + [bad_box(n, e) for e in range(1, n + 1)]
        return mix(boxes, [1.0 - self.lam, *self.bad_weights])


def lambda_decompose(box: ChainBox, tol: float = CHECK_TOL) -> BoxDecomposition:
    """Write ``box`` as (1 - lam) ideal + sum_e w_e bad(e).

    Only boxes in the convex hull of the ideal and single-contradiction boxes
    are accepted; anything else raises ``ValueError``.
    """
    n = box.n
    w = box.error_masses()
    if not box.allclose(_box_from_errors(n, w), atol=tol):
        raise ValueError("box is not a mixture of ideal and single-contradiction boxes (non-uniform marginals)")
    lam = float(w.sum())
    if lam > 1.0 + tol:
        raise ValueError(f"edge error masses sum to {lam} > 1; box lies outside the family")
    return BoxDecomposition(min(lam, 1.0), w.copy())


def deterministic_boxes(n: int):
    """Yield (assignment, ChainBox) for every local deterministic strategy.

    ``assignment[s-1]`` is the outcome produced at setting ``s``.
    """
    _check_n(n)
    for assign in itertools.product((0, 1), repeat=n):
        edges = np.zeros((n, 4))
        for e in range(1, n + 1):
            u, v = edge_settings(n, e)
            edges[e - 1, 2 * assign[u - 1] + assign[v - 1]] = 1.0
        yield assign, ChainBox(n, edges)


# --- the toy attack on CHSH ------------------------------------------------

CHSH_N = 4
CHSH_INPUTS = ((1, 2), (3, 2), (3, 4), (1, 4))


@dataclass(frozen=True)
class ToyScenario:
    """Local boxes L_ij perfectly correlated with the source value S = (i, j).

    Each L_ij reproduces the PR correlation only on its own input pair and
    contradicts it on the other three edges of the CHSH chain; it is the even
    mixture of that deterministic assignment and its complement.
    """

    local_boxes: Mapping[tuple, ChainBox]
    source_correlation: Mapping[tuple, Mapping[tuple, float]]
    input_correlation: Mapping[tuple, Mapping[tuple, float]]
    source_dist: Mapping[tuple, float]
    tester_given_source: Mapping[tuple, Mapping[tuple, float]]

    @property
    def mixture(self) -> ChainBox:
        keys = list(self.local_boxes)
        return mix([self.local_boxes[k] for k in keys], [self.source_dist[k] for k in keys])


def _delta_table(keys):
    return {s: {k: float(k == s) for k in keys} for s in keys}


def canonical_toy_scenario() -> ToyScenario:
    edge_of_input = {inp: edge_of(CHSH_N, *inp) for inp in CHSH_INPUTS}
    boxes = {inp: flipped_box(CHSH_N, [e for e in range(1, CHSH_N + 1) if e != edge])
             for inp, edge in edge_of_input.items()}
    uniform = {k: 1.0 / len(CHSH_INPUTS) for k in CHSH_INPUTS}
    return ToyScenario(
        local_boxes=boxes,
        source_correlation=_delta_table(CHSH_INPUTS),
        input_correlation=_delta_table(CHSH_INPUTS),
        source_dist=uniform,
        tester_given_source={s: dict(uniform) for s in CHSH_INPUTS},
    )


def pr_consistent(inp: tuple, outcome: tuple) -> bool:
    x, y = outcome
    return (x != y) if edge_of(CHSH_N, *inp) == CHSH_N else (x == y)


def toy_attack(scenario: ToyScenario, tester_input: tuple, observed: tuple) -> dict[tuple, float]:
    """Posterior P(S | S' = tester_input, O = observed) for a tester probing the toy boxes."""
    if tester_input not in CHSH_INPUTS:
        raise ValueError(f"tester input {tester_input} is not a CHSH input pair")
    edge = edge_of(CHSH_N, *tester_input)
    joint = {}
    for s, p_s in scenario.source_dist.items():
        # P(O=o | I=s', S=s) = sum over boxes L of P(L|S=s) L(o | s')
        p_o = sum(
            p_l * scenario.local_boxes[l].table(edge)[observed]
            for l, p_l in scenario.source_correlation[s].items()
        )
        joint[s] = p_s * scenario.tester_given_source[s][tester_input] * p_o
    total = sum(joint.values())
    if total == 0.0:
        raise ValueError(f"outcome {observed} has zero probability on input {tester_input}")
    return {s: v / total for s, v in joint.items()}

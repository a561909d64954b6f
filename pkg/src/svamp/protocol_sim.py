"""Seeded Monte Carlo runs of the amplification protocol.

One trial:
  1. every run reads 2r SV bits (n = 2^{r+1}): r for Alice's odd setting, r for
     Bob's even setting; runs whose settings sit on a chain edge form S;
  2. fail unless 2M/n <= |S| <= 6M/n;
  3. fail unless every run in S shows the ideal correlation for its edge;
  4. read ceil(log2 |S|) more SV bits per attempt, rejecting indices >= |S|,
     to pick f in S; the output is Alice's bit on run f.

Under the ``attack`` supplier the first m runs of S receive a box sequence
drawn from an AttackEnsemble, and the adversary steers the step-4 bits toward
bad boxes, clipped to the SV range.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, NamedTuple

import numpy as np
from scipy.stats import binom, binomtest

from .attack_lp import AttackEnsemble
from .boxes import delta_q
from .sv_source import SvParameter, SvSource

SUPPLIERS = ("honest_quantum", "honest_ideal", "attack", "toy")
BAD_OUTPUTS = ("uniform", "fixed")

FAIL_CARDINALITY = "fail_cardinality"
FAIL_CONSISTENCY = "fail_consistency"
ACCEPT = "accept"


def default_runs(n: int) -> int:
    return max(1, round((n / 2) ** 2.99))


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    M: int | None = None
    epsilon: float = 0.0
    source_strategy: str = "uniform"
    table: Mapping[tuple, float] | None = None
    supplier: str = "honest_quantum"
    ensemble: AttackEnsemble | None = None
    bad_output: str = "uniform"  # "fixed": bad boxes always output x = 0
    seed: int = 0

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 4 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 4, got {n!r}")
        if self.M is None:
            object.__setattr__(self, "M", default_runs(n))
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.supplier not in SUPPLIERS:
            raise ValueError(f"unknown supplier {self.supplier!r}; expected one of {SUPPLIERS}")
        if self.bad_output not in BAD_OUTPUTS:
            raise ValueError(f"bad_output must be one of {BAD_OUTPUTS}")
        if self.supplier == "attack":
            if self.ensemble is None:
                raise ValueError("the attack supplier needs an ensemble")
            if self.ensemble.n != n:
                raise ValueError(f"ensemble is for n={self.ensemble.n}, config has n={n}")
        SvParameter(self.epsilon)

    @property
    def r_bits(self) -> int:
        return int(math.log2(self.n)) - 1

    @property
    def sv(self) -> SvParameter:
        return SvParameter(self.epsilon)

    def to_dict(self) -> dict:
        return {
            "n": int(self.n), "M": int(self.M), "epsilon": self.epsilon, "r_bits": self.r_bits,
            "source_strategy": self.source_strategy, "supplier": self.supplier,
            "bad_output": self.bad_output, "seed": int(self.seed),
            "ensemble": None if self.ensemble is None else self.ensemble.type_probs.tolist(),
        }


class RunRecord(NamedTuple):
    run_index: int
    alice_setting: int
    bob_setting: int
    in_S: bool
    edge: int  # 0 off the chain
    outcomes: tuple[int, int]
    consistent: bool
    box: int  # 0 ideal/honest, e > 0 contradicts edge e


@dataclass
class Transcript:
    u: np.ndarray
    v: np.ndarray
    edge: np.ndarray
    x: np.ndarray
    y: np.ndarray
    box: np.ndarray

    @property
    def in_S(self) -> np.ndarray:
        return self.edge > 0

    def consistent(self, n: int) -> np.ndarray:
        """Per-run consistency; runs outside S are vacuously consistent."""
        want = (self.edge == n).astype(np.int8)
        return ~self.in_S | ((self.x ^ self.y) == want)

    def records(self, n: int) -> Iterator[RunRecord]:
        cons = self.consistent(n)
        for i in range(self.u.size):
            yield RunRecord(i, int(self.u[i]), int(self.v[i]), bool(self.edge[i] > 0), int(self.edge[i]),
                            (int(self.x[i]), int(self.y[i])), bool(cons[i]), int(self.box[i]))


@dataclass
class ProtocolOutcome:
    result: str
    bit: int | None
    s_size: int
    f_index: int | None  # run index of the output run
    transcript: Transcript = field(repr=False)
    f_hits_bad: bool | None = None
    steering_clipped: bool = False
    steer_success: float | None = None  # achieved P(f lands on a bad box in S)

    @property
    def accepted(self) -> bool:
        return self.result == ACCEPT


def chain_edges(n: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorised edge_of: edge index for each (u, v), 0 when off the chain."""
    e = np.where(np.abs(u - v) == 1, np.minimum(u, v), 0)
    return np.where((u == 1) & (v == n), n, e)


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    """Big-endian rows of bits to integers."""
    w = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return bits.astype(np.int64) @ w


def cardinality_window(n: int, M: int) -> tuple[int, int]:
    """Integer range of |S| that passes the cardinality test."""
    return math.ceil(2 * M / n - 1e-12), math.floor(6 * M / n + 1e-12)


def cardinality_pass_probability(n: int, M: int) -> float:
    """P(|S| within the window) for |S| ~ Bin(M, 4/n), the unbiased-source case."""
    lo, hi = cardinality_window(n, M)
    return float(binom.cdf(hi, M, 4 / n) - binom.cdf(lo - 1, M, 4 / n))


def _trial_streams(seed: int, trial: int):
    """Independent generators for the SV source and for the box supplier."""
    return np.random.default_rng([int(seed), int(trial), 0]), np.random.default_rng([int(seed), int(trial), 1])


def steering_tables(targets: np.ndarray, depth: int) -> list[np.ndarray]:
    """Wished-for P(next bit = 1) at each node, level by level.

    Node j at level L covers the indices [j 2^{depth-L}, (j+1) 2^{depth-L}); the
    wish sends f uniformly onto the target indices below it (1/2 if there are none).
    """
    targets = np.sort(np.asarray(targets, dtype=np.int64))
    tables = []
    for level in range(depth):
        half = 1 << (depth - level - 1)
        starts = np.arange(1 << level, dtype=np.int64) * 2 * half
        c = np.searchsorted(targets, np.stack([starts, starts + half, starts + 2 * half]))
        c0, c1 = c[1] - c[0], c[2] - c[1]
        tot = c0 + c1
        tables.append(np.where(tot > 0, c1 / np.maximum(tot, 1), 0.5))
    return tables


def _wish(targets: list[int], depth: int, level: int, node: int) -> float:
    half = 1 << (depth - level - 1)
    lo = node * 2 * half
    a, b, c = (bisect_left(targets, lo + k * half) for k in range(3))
    return (c - b) / (c - a) if c > a else 0.5


def achieved_hit_probability(tables: list[np.ndarray], size: int, targets: np.ndarray, sv: SvParameter) -> float:
    """P(f in targets) under the clipped steering, given rejection of indices >= size."""
    w = np.ones(1)
    for wish in tables:
        p1 = np.clip(wish, sv.p_minus, sv.p_plus)
        w = np.stack([w * (1 - p1), w * p1], axis=1).ravel()
    return float(w[np.asarray(targets, dtype=np.int64)].sum() / w[:size].sum())


def run_protocol(config: ProtocolConfig, trial: int = 0) -> ProtocolOutcome:
    """One trial; the randomness is a pure function of (config.seed, trial)."""
    n, M, r, sv = config.n, config.M, config.r_bits, config.sv
    rng_src, rng_box = _trial_streams(config.seed, trial)
    source = SvSource(sv, config.source_strategy, rng_src, config.table)

    # step 1: settings from SV bits
    bits, _ = source.draw(2 * r * M)
    bits = bits.reshape(M, 2 * r)
    u = 2 * _bits_to_int(bits[:, :r]) + 1
    v = 2 * _bits_to_int(bits[:, r:]) + 2
    edge = chain_edges(n, u, v)
    in_s = np.flatnonzero(edge > 0)
    s_size = int(in_s.size)

    # boxes and outcomes
    box = np.zeros(M, dtype=np.int64)
    x = rng_box.integers(0, 2, M).astype(np.int8)
    noise = rng_box.integers(0, 2, M).astype(np.int8)
    flip = np.zeros(M, dtype=np.int8)
    if config.supplier == "honest_quantum":
        flip = (rng_box.random(M) < delta_q(n)).astype(np.int8)
    elif config.supplier == "attack":
        seq = config.ensemble.sample_sequence(rng_box)
        k = min(seq.size, s_size)
        box[in_s[:k]] = seq[:k]
        bad = box > 0
        flip = (bad & (box == edge)).astype(np.int8)
        if config.bad_output == "fixed":
            x[bad] = 0
    elif config.supplier == "toy":
        x[:] = 0
    y = np.where(edge > 0, x ^ (edge == n).astype(np.int8) ^ flip, noise).astype(np.int8)
    transcript = Transcript(u, v, edge, x, y, box)

    # step 2
    lo, hi = cardinality_window(n, M)
    if not lo <= s_size <= hi:
        return ProtocolOutcome(FAIL_CARDINALITY, None, s_size, None, transcript)
    # step 3
    if not transcript.consistent(n)[in_s].all():
        return ProtocolOutcome(FAIL_CONSISTENCY, None, s_size, None, transcript)

    # step 4: pick f among the in-S runs
    depth = max(0, math.ceil(math.log2(s_size)))
    targets = np.flatnonzero(box[in_s] > 0)
    clipped = False
    steer_success = None
    if targets.size:
        if sv.epsilon == 0.0:
            steer_success = targets.size / s_size
        else:
            steer_success = achieved_hit_probability(steering_tables(targets, depth), s_size, targets, sv)
        tlist = targets.tolist()
        while True:
            idx = 0
            for level in range(depth):
                b, _, c = source.draw_steered(_wish(tlist, depth, level, idx))
                clipped |= c
                idx = 2 * idx + b
            if idx < s_size:
                break
    else:
        while True:
            fb, _ = source.draw(depth)
            idx = int(_bits_to_int(fb[None])[0]) if depth else 0
            if idx < s_size:
                break
    f = int(in_s[idx])
    hits = bool(box[f] > 0) if config.supplier == "attack" else None
    return ProtocolOutcome(ACCEPT, int(x[f]), s_size, f, transcript, hits, clipped, steer_success)


# --- estimators ------------------------------------------------------------


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class TrialTally:
    trials: int = 0
    accepted: int = 0
    fail_cardinality: int = 0
    fail_consistency: int = 0
    ones: int = 0
    hits_bad: int = 0
    ones_given_hit: int = 0
    clipped: int = 0
    in_s_runs: int = 0
    in_s_inconsistent: int = 0
    s_sizes: list = field(default_factory=list)

    def add(self, out: ProtocolOutcome, n: int):
        self.trials += 1
        self.s_sizes.append(out.s_size)
        t = out.transcript
        ins = t.in_S
        self.in_s_runs += int(ins.sum())
        self.in_s_inconsistent += int((ins & ~t.consistent(n)).sum())
        if out.result == FAIL_CARDINALITY:
            self.fail_cardinality += 1
        elif out.result == FAIL_CONSISTENCY:
            self.fail_consistency += 1
        else:
            self.accepted += 1
            self.ones += out.bit
            self.clipped += int(out.steering_clipped)
            if out.f_hits_bad:
                self.hits_bad += 1
                self.ones_given_hit += out.bit

    def merge(self, other: "TrialTally") -> "TrialTally":
        merged = TrialTally()
        for name in ("trials", "accepted", "fail_cardinality", "fail_consistency", "ones", "hits_bad",
                     "ones_given_hit", "clipped", "in_s_runs", "in_s_inconsistent"):
            setattr(merged, name, getattr(self, name) + getattr(other, name))
        merged.s_sizes = self.s_sizes + other.s_sizes
        return merged


def _tally_range(config: ProtocolConfig, start: int, stop: int) -> TrialTally:
    tally = TrialTally()
    for t in range(start, stop):
        tally.add(run_protocol(config, t), config.n)
    return tally


def run_trials(config: ProtocolConfig, trials: int, workers: int | None = None) -> TrialTally:
    """Tally ``trials`` independent trials; chunks are reduced in trial order, so workers don't change results."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not workers or workers <= 1:
        return _tally_range(config, 0, trials)
    bounds = np.linspace(0, trials, workers + 1).astype(int)
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_tally_range, [config] * workers, bounds[:-1], bounds[1:]))
    total = TrialTally()
    for p in parts:
        total = total.merge(p)
    return total


class AcceptanceEstimate(NamedTuple):
    rate: float
    ci: tuple[float, float]
    accepted: int
    trials: int
    fail_cardinality: int
    fail_consistency: int


def acceptance_from_tally(tally: TrialTally) -> AcceptanceEstimate:
    return AcceptanceEstimate(tally.accepted / tally.trials, wilson_interval(tally.accepted, tally.trials),
                              tally.accepted, tally.trials, tally.fail_cardinality, tally.fail_consistency)


def estimate_acceptance(config: ProtocolConfig, trials: int, workers: int | None = None) -> AcceptanceEstimate:
    """Empirical P(accept) with a 95% Wilson interval."""
    return acceptance_from_tally(run_trials(config, trials, workers))


class BiasEstimate(NamedTuple):
    bias: float  # |P(R=1 | accept) - 1/2|
    p_one: float
    p_one_ci: tuple[float, float]
    accepted: int
    hits_bad: int
    bias_given_hit: float | None  # same, restricted to accepted trials whose f is a bad box
    clipped: int


def bias_from_tally(tally: TrialTally) -> BiasEstimate:
    if tally.accepted == 0:
        return BiasEstimate(float("nan"), float("nan"), (0.0, 1.0), 0, 0, None, 0)
    p = tally.ones / tally.accepted
    given = abs(tally.ones_given_hit / tally.hits_bad - 0.5) if tally.hits_bad else None
    return BiasEstimate(abs(p - 0.5), p, wilson_interval(tally.ones, tally.accepted), tally.accepted,
                        tally.hits_bad, given, tally.clipped)


def estimate_output_bias(config: ProtocolConfig, trials: int, workers: int | None = None) -> BiasEstimate:
    return bias_from_tally(run_trials(config, trials, workers))


class EdgeErrorEstimate(NamedTuple):
    rate: float
    ci: tuple[float, float]
    inconsistent: int
    in_s_runs: int


def edge_error_from_tally(tally: TrialTally) -> EdgeErrorEstimate:
    k, N = tally.in_s_inconsistent, tally.in_s_runs
    return EdgeErrorEstimate(k / N if N else float("nan"), wilson_interval(k, N) if N else (0.0, 1.0), k, N)


def summarize(config: ProtocolConfig, tally: TrialTally) -> dict:
    acc = acceptance_from_tally(tally)
    bias = bias_from_tally(tally)
    err = edge_error_from_tally(tally)
    sizes = np.asarray(tally.s_sizes)
    return {
        "config": config.to_dict(),
        "trials": tally.trials,
        "acceptance": {"rate": acc.rate, "ci_low": acc.ci[0], "ci_high": acc.ci[1], "accepted": acc.accepted,
                       "fail_cardinality": acc.fail_cardinality, "fail_consistency": acc.fail_consistency},
        "output": {"p_one": bias.p_one, "bias": bias.bias, "ci_low": bias.p_one_ci[0],
                   "ci_high": bias.p_one_ci[1], "f_hits_bad": bias.hits_bad,
                   "bias_given_hit": bias.bias_given_hit, "steering_clipped": bias.clipped},
        "in_s": {"runs": err.in_s_runs, "inconsistent": err.inconsistent, "rate": err.rate,
                 "ci_low": err.ci[0], "ci_high": err.ci[1], "mean_size": float(sizes.mean()),
                 "cardinality_pass_unbiased": cardinality_pass_probability(config.n, config.M)},
    }


def with_seed(config: ProtocolConfig, seed: int) -> ProtocolConfig:
    return replace(config, seed=seed)

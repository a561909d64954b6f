import math

import numpy as np
import pytest
from scipy.stats import binom, chisquare

from svamp.attack_lp import AttackEnsemble, closed_form_optimum, derive_attack_params, primal_row_residuals, solve_lp
from svamp.boxes import delta_q, edge_of
from svamp.protocol_sim import (
    ACCEPT,
    FAIL_CARDINALITY,
    FAIL_CONSISTENCY,
    ProtocolConfig,
    achieved_hit_probability,
    acceptance_from_tally,
    bias_from_tally,
    cardinality_pass_probability,
    cardinality_window,
    chain_edges,
    default_runs,
    edge_error_from_tally,
    estimate_acceptance,
    run_protocol,
    run_trials,
    steering_tables,
    summarize,
    wilson_interval,
    with_seed,
)
from svamp.sv_source import SvParameter


def test_config_validation():
    assert ProtocolConfig(8).M == default_runs(8) == round(4**2.99)
    for n in (2, 6, 12):
        with pytest.raises(ValueError):
            ProtocolConfig(n)
    with pytest.raises(ValueError):
        ProtocolConfig(8, M=0)
    with pytest.raises(ValueError):
        ProtocolConfig(8, supplier="nobody")
    with pytest.raises(ValueError):
        ProtocolConfig(8, supplier="attack")
    with pytest.raises(ValueError):
        ProtocolConfig(8, supplier="attack", ensemble=AttackEnsemble.single_type(4, 1, 4))
    with pytest.raises(ValueError):
        ProtocolConfig(8, epsilon=0.6)
    assert ProtocolConfig(16).r_bits == 3


def test_cardinality_window():
    assert cardinality_window(8, 4096) == (1024, 3072)
    assert cardinality_window(8, 63) == (16, 47)
    assert cardinality_window(8, 8) == (2, 6)
    # Bin(8, 1/2) inside [2, 6]
    assert cardinality_pass_probability(8, 8) == pytest.approx(1 - 2 * 9 / 256, abs=1e-15)


def test_chain_edges_matches_scalar():
    n = 8
    u, v = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1))
    u, v = u.ravel(), v.ravel()
    vec = chain_edges(n, u, v)
    for a, b, e in zip(u, v, vec):
        want = edge_of(n, int(a), int(b))
        assert e == (want or 0)


def test_determinism_per_seed():
    cfg = ProtocolConfig(8, M=63, epsilon=0.05, source_strategy="extremal_bernoulli", seed=4)
    a, b = run_protocol(cfg, 3), run_protocol(cfg, 3)
    assert a.result == b.result and a.bit == b.bit and a.f_index == b.f_index
    for name in ("u", "v", "edge", "x", "y", "box"):
        assert np.array_equal(getattr(a.transcript, name), getattr(b.transcript, name))
    c = run_protocol(with_seed(cfg, 5), 3)
    assert not np.array_equal(a.transcript.u, c.transcript.u)


def test_workers_do_not_change_results():
    cfg = ProtocolConfig(8, M=63, seed=9)
    one = summarize(cfg, run_trials(cfg, 200))
    two = summarize(cfg, run_trials(cfg, 200, workers=2))
    assert one == two


def test_run_records_invariant():
    n = 8
    cfg = ProtocolConfig(n, M=200, seed=1)
    for t in range(20):
        out = run_protocol(cfg, t)
        for rec in out.transcript.records(n):
            in_s = abs(rec.alice_setting - rec.bob_setting) == 1 or (rec.alice_setting, rec.bob_setting) == (1, n)
            assert rec.in_S == in_s
            assert rec.alice_setting % 2 == 1 and rec.bob_setting % 2 == 0
            if not rec.in_S:
                assert rec.consistent
        assert out.s_size == int(out.transcript.in_S.sum())


def test_outcome_rules():
    n = 8
    cfg = ProtocolConfig(n, M=63, seed=2)
    lo, hi = cardinality_window(n, 63)
    for t in range(300):
        out = run_protocol(cfg, t)
        cons = out.transcript.consistent(n).all()
        if not lo <= out.s_size <= hi:
            assert out.result == FAIL_CARDINALITY
        elif not cons:
            assert out.result == FAIL_CONSISTENCY
        else:
            assert out.result == ACCEPT and out.bit in (0, 1)
            assert out.transcript.in_S[out.f_index]
            assert out.bit == out.transcript.x[out.f_index]


def test_honest_ideal_never_inconsistent():
    cfg = ProtocolConfig(8, M=4096, supplier="honest_ideal", seed=3)
    tally = run_trials(cfg, 1000)
    assert tally.fail_consistency == 0 and tally.in_s_inconsistent == 0
    # the pass probability is within 1e-200 of 1 here, so no failures at all
    assert tally.fail_cardinality == 0


def test_cardinality_failures_match_binomial_tail():
    n, M, T = 8, 8, 20_000
    cfg = ProtocolConfig(n, M=M, supplier="honest_ideal", seed=11)
    tally = run_trials(cfg, T)
    p_fail = 1 - cardinality_pass_probability(n, M)
    sigma = math.sqrt(p_fail * (1 - p_fail) / T)
    assert abs(tally.fail_cardinality / T - p_fail) < 3 * sigma
    assert tally.fail_consistency == 0
    rate = acceptance_from_tally(tally).rate
    assert rate == pytest.approx(1 - tally.fail_cardinality / T)


def test_s_size_distribution_chi_square():
    n, M = 8, 63
    sizes = np.array(run_trials(ProtocolConfig(n, M=M, supplier="honest_ideal", seed=21), 1000).s_sizes)
    # bins with expected count >= 5, tails lumped
    lo, hi = 22, 41
    k = np.arange(lo, hi + 1)
    probs = np.concatenate([[binom.cdf(lo - 1, M, 0.5)], binom.pmf(k, M, 0.5), [binom.sf(hi, M, 0.5)]])
    obs = np.concatenate([[(sizes < lo).sum()], [(sizes == j).sum() for j in k], [(sizes > hi).sum()]])
    assert chisquare(obs, probs * sizes.size).pvalue > 0.01


def test_quantum_edge_error_rate():
    n = 8
    tally = run_trials(ProtocolConfig(n, M=63, seed=31), 2000)
    est = edge_error_from_tally(tally)
    p = delta_q(n)
    sigma = math.sqrt(p * (1 - p) / est.in_s_runs)
    assert abs(est.rate - p) < 3 * sigma


def test_type_one_attack_acceptance():
    n, m = 8, 16
    ens = AttackEnsemble.single_type(m, 1, n)
    T = 8000
    tally = run_trials(ProtocolConfig(n, M=63, supplier="attack", ensemble=ens, seed=41), T)
    want = (1 - 1 / n) * cardinality_pass_probability(n, 63)
    sigma = math.sqrt(want * (1 - want) / T)
    assert abs(tally.accepted / T - want) < 3 * sigma


def test_honest_ideal_is_unbiased():
    tally = run_trials(ProtocolConfig(8, M=63, supplier="honest_ideal", seed=51), 20_000)
    b = bias_from_tally(tally)
    sigma = 0.5 / math.sqrt(b.accepted)
    assert b.bias < 3 * sigma
    assert b.p_one_ci[0] <= 0.5 <= b.p_one_ci[1]


def test_honest_quantum_bias_within_bound():
    n = 8
    b = bias_from_tally(run_trials(ProtocolConfig(n, M=63, seed=61), 20_000))
    bound = n / 2 * delta_q(n)
    assert b.bias <= bound + 3 * 0.5 / math.sqrt(b.accepted)


def test_fixed_bad_outputs_bias_on_hits():
    n, m = 8, 16
    cfg = ProtocolConfig(n, M=63, supplier="attack", ensemble=AttackEnsemble.single_type(m, 2, n),
                         bad_output="fixed", seed=71)
    b = bias_from_tally(run_trials(cfg, 3000))
    assert b.hits_bad > 100
    assert b.bias_given_hit == pytest.approx(0.5, abs=1e-12)  # every hit outputs x = 0


def test_steering_success_at_zero_bias():
    n, m = 8, 16
    cfg = ProtocolConfig(n, M=63, supplier="attack", ensemble=AttackEnsemble.single_type(m, 3, n), seed=81)
    for t in range(30):
        out = run_protocol(cfg, t)
        if out.accepted:
            bad = int(((out.transcript.box > 0) & out.transcript.in_S).sum())
            assert out.steer_success == pytest.approx(bad / out.s_size, abs=1e-12)


def test_steering_hand_computed():
    sv = SvParameter(0.1)
    # one target among two: the single bit wants 0 but is held at p- = 0.4
    assert achieved_hit_probability(steering_tables(np.array([0]), 1), 2, np.array([0]), sv) == pytest.approx(0.6)
    # size 3, depth 2, target 0: leaves weigh .36, .24, .2, .2 and index 3 is rejected
    tables = steering_tables(np.array([0]), 2)
    assert [t.tolist() for t in tables] == [[0.0], [0.0, 0.5]]
    assert achieved_hit_probability(tables, 3, np.array([0]), sv) == pytest.approx(0.36 / 0.8, abs=1e-15)


def test_steering_frequency_matches_reported_success():
    n, m = 8, 16
    cfg = ProtocolConfig(n, M=63, epsilon=0.1, supplier="attack",
                         ensemble=AttackEnsemble.single_type(m, 2, n), seed=131)
    hits, expected, acc = 0, 0.0, 0
    for t in range(4000):
        out = run_protocol(cfg, t)
        if out.accepted:
            acc += 1
            hits += out.f_hits_bad
            expected += out.steer_success
            assert out.steering_clipped
    p = expected / acc
    assert abs(hits / acc - p) < 3 * math.sqrt(p * (1 - p) / acc)


def test_acceptance_never_exceeds_lp_optimum():
    n, m, eps = 8, 16, 0.05
    params = derive_attack_params(SvParameter(eps), 2, m=m)
    sol = solve_lp(params)
    assert sol.status == "optimal"
    opt = closed_form_optimum(params)
    last = AttackEnsemble.single_type(m, m, n)
    assert primal_row_residuals(params, {m: 1.0}).max() <= 1e-12
    T = 3000
    for i, t in enumerate((0.0, 0.5, 1.0)):
        # convex mixtures of two LP-feasible points are feasible symmetric attacks
        ens = AttackEnsemble(n, t * opt.vector() + (1 - t) * last.type_probs)
        cfg = ProtocolConfig(n, M=63, epsilon=eps, source_strategy="extremal_bernoulli",
                             supplier="attack", ensemble=ens, seed=140 + i)
        est = estimate_acceptance(cfg, T)
        # one-sided 95%: the lower end of a two-sided 90% Wilson interval
        assert wilson_interval(est.accepted, T, 0.90)[0] <= sol.optimal_value


def test_summary_keys():
    cfg = ProtocolConfig(8, M=63, seed=1)
    s = summarize(cfg, run_trials(cfg, 50))
    assert set(s) == {"config", "trials", "acceptance", "output", "in_s"}
    assert s["trials"] == 50

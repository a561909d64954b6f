import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svamp.boxes import (
    CHSH_INPUTS,
    ChainBox,
    bad_box,
    bell_indicator,
    canonical_toy_scenario,
    check_no_signaling,
    delta_q,
    deterministic_boxes,
    edge_of,
    edge_settings,
    flipped_box,
    ideal_box,
    lambda_decompose,
    mix,
    observed_bell_value,
    pr_consistent,
    quantum_box,
    randomness_distance,
    toy_attack,
    true_bell_value,
)

even_n = st.sampled_from([2, 4, 8, 16])


def test_indicator_has_two_ones_per_edge():
    for n in (2, 4, 8):
        assert np.all(bell_indicator(n).sum(axis=1) == 2)


def test_edge_geometry_round_trip():
    # n = 2 is degenerate: the (1, n) pair is edge 1's pair read the other way
    for n in (4, 8):
        for e in range(1, n + 1):
            u, v = edge_settings(n, e)
            assert u % 2 == 1 and v % 2 == 0
            assert edge_of(n, u, v) == e
    assert edge_of(8, 1, 6) is None


def test_ideal_box_n2_is_pr_box():
    pr = ideal_box(2)
    # edge 1 (inputs 1,2): x == y; edge 2 (inputs 1,2 read as the (1, n) pair): x != y
    assert np.allclose(pr.table(1), [[0.5, 0], [0, 0.5]])
    assert np.allclose(pr.table(2), [[0, 0.5], [0.5, 0]])
    assert true_bell_value(pr) == 0.0


def test_ideal_box_properties():
    assert true_bell_value(ideal_box(4)) == 0.0
    assert set(np.unique(ideal_box(8).edges)) == {0.0, 0.5}
    with pytest.raises(ValueError):
        ideal_box(3)
    with pytest.raises(ValueError):
        ideal_box(0)


def test_bad_box():
    assert true_bell_value(bad_box(4, 2)) == pytest.approx(0.25, abs=1e-15)
    b = bad_box(4, 4)
    # the anti-correlated pair (1, n) is turned into a correlated one
    assert np.allclose(b.table(4), [[0.5, 0], [0, 0.5]])
    with pytest.raises(ValueError):
        bad_box(4, 5)
    with pytest.raises(ValueError):
        bad_box(4, 0)


def test_quantum_box():
    assert true_bell_value(quantum_box(2)) == pytest.approx(0.5, abs=1e-15)
    assert true_bell_value(quantum_box(8)) == pytest.approx(math.sin(math.pi / 16) ** 2, abs=1e-12)
    assert true_bell_value(quantum_box(8)) == pytest.approx(0.03806, abs=5e-6)
    assert true_bell_value(quantum_box(16)) == pytest.approx(math.sin(math.pi / 32) ** 2, abs=1e-12)
    n = 512
    assert delta_q(n) * n * n == pytest.approx(math.pi**2 / 4, rel=0.01)
    assert check_no_signaling(quantum_box(8))


def test_mix():
    assert mix([ideal_box(4)], [1.0]).allclose(ideal_box(4))
    lam = 0.3
    m = mix([ideal_box(4), bad_box(4, 3)], [1 - lam, lam])
    assert true_bell_value(m) == pytest.approx(lam / 4, abs=1e-12)
    with pytest.raises(ValueError):
        mix([ideal_box(4), bad_box(4, 1)], [0.5, 0.6])
    with pytest.raises(ValueError):
        mix([ideal_box(4), ideal_box(8)], [0.5, 0.5])


def test_no_signaling_violation_report():
    edges = ideal_box(4).edges.copy()
    edges[0] = [0.7, 0.0, 0.0, 0.3]  # Alice's setting 1 marginal 0.7 on edge 1, 0.5 on edge 4
    rep = check_no_signaling(ChainBox(4, edges))
    assert not rep
    settings_hit = {v["setting"] for v in rep.violations}
    assert 1 in settings_hit
    v1 = next(v for v in rep.violations if v["setting"] == 1)
    assert v1["party"] == "alice" and set(v1["edges"]) == {1, 4}
    assert v1["magnitude"] == pytest.approx(0.2)
    assert check_no_signaling(ideal_box(4))


def test_chain_box_validation_and_json():
    with pytest.raises(ValueError):
        ChainBox(4, np.full((4, 4), 0.3))
    with pytest.raises(ValueError):
        ChainBox(4, np.array([[1.2, -0.2, 0, 0]] * 4))
    b = quantum_box(8)
    assert ChainBox.from_json(b.to_json()).allclose(b, atol=0)


def test_observed_value_examples():
    n = 4
    uniform = {s: 1 / n for s in range(1, n + 1)}
    assert observed_bell_value({s: ideal_box(n) for s in uniform}, uniform) == 0.0
    # each source value s hands over a box that contradicts only on a different edge
    evasive = {s: bad_box(n, s % n + 1) for s in uniform}
    assert observed_bell_value(evasive, uniform) == 0.0
    assert all(true_bell_value(b) == pytest.approx(1 / n) for b in evasive.values())
    q = quantum_box(n)
    assert observed_bell_value({s: q for s in uniform}, uniform) == pytest.approx(true_bell_value(q), abs=1e-15)
    with pytest.raises(ValueError):
        observed_bell_value({1: q}, {1: 0.5, 2: 0.5})


def test_randomness_distance():
    assert randomness_distance(ideal_box(8)) == 0.0
    assert randomness_distance(bad_box(4, 1)) == pytest.approx(0.5)
    lam = 0.2
    assert randomness_distance(mix([ideal_box(4), bad_box(4, 2)], [1 - lam, lam])) <= lam / 2 + 1e-15


def test_lambda_decompose_examples():
    assert lambda_decompose(ideal_box(4)).lam == 0.0
    d = lambda_decompose(mix([ideal_box(4), bad_box(4, 2)], [0.9, 0.1]))
    assert d.lam == pytest.approx(0.1, abs=1e-12)
    assert np.allclose(d.bad_weights, [0, 0.1, 0, 0], atol=1e-12)
    # boxes with biased marginals are outside the family
    edges = ideal_box(4).edges.copy()
    edges[:] = [1.0, 0, 0, 0]
    edges[3] = [0, 1.0, 0, 0]
    with pytest.raises(ValueError):
        lambda_decompose(ChainBox(4, edges))
    # uniform marginals but too much error mass
    with pytest.raises(ValueError):
        lambda_decompose(flipped_box(4, [1, 2]))


def _random_family_box(rng, n):
    w = rng.dirichlet(np.ones(n + 1))
    return mix([ideal_box(n)] + [bad_box(n, e) for e in range(1, n + 1)], w), w


def test_lambda_equals_n_times_true_value():
    rng = np.random.default_rng(5)
    for _ in range(50):
        box, w = _random_family_box(rng, 8)
        d = lambda_decompose(box)
        assert d.lam == pytest.approx(8 * true_bell_value(box), abs=1e-12)
        assert d.lam == pytest.approx(1 - w[0], abs=1e-12)
        assert d.reconstruct(8).allclose(box)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_distance_chain_on_random_mixtures(n):
    rng = np.random.default_rng(n)
    for _ in range(1000):
        box, _ = _random_family_box(rng, n)
        lam = lambda_decompose(box).lam
        d = randomness_distance(box)
        assert d <= lam / 2 + 1e-12
        assert lam / 2 <= n / 2 * true_bell_value(box) + 1e-12
        assert check_no_signaling(box, tol=1e-12)


@settings(max_examples=100, deadline=None)
@given(n=even_n, t=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_true_value_affine_under_mix(n, t, seed):
    rng = np.random.default_rng(seed)
    a, _ = _random_family_box(rng, n)
    b = mix([quantum_box(n), bad_box(n, 1)], [0.5, 0.5])
    m = mix([a, b], [t, 1 - t])
    assert true_bell_value(m) == pytest.approx(t * true_bell_value(a) + (1 - t) * true_bell_value(b), abs=1e-12)
    assert check_no_signaling(m, tol=1e-12)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_deterministic_boxes_are_classical(n):
    values = [true_bell_value(b) for _, b in deterministic_boxes(n)]
    assert len(values) == 2**n
    assert min(values) >= 1 / n - 1e-15
    if n == 2:
        assert set(values) == {0.5}


# --- toy attack --------------------------------------------------------------


def test_toy_tables_are_deltas():
    sc = canonical_toy_scenario()
    for s in CHSH_INPUTS:
        assert sc.source_correlation[s] == {k: float(k == s) for k in CHSH_INPUTS}
        assert sc.input_correlation[s] == {k: float(k == s) for k in CHSH_INPUTS}
        assert check_no_signaling(sc.local_boxes[s])


def test_toy_posteriors():
    sc = canonical_toy_scenario()
    for s in CHSH_INPUTS:
        for o in ((0, 0), (0, 1), (1, 0), (1, 1)):
            post = toy_attack(sc, s, o)
            assert sum(post.values()) == pytest.approx(1.0)
            if pr_consistent(s, o):
                # the matched box alone explains a consistent outcome half the time,
                # the three others never do
                assert post[s] == pytest.approx(1.0)
            else:
                assert post[s] == 0.0
    with pytest.raises(ValueError):
        toy_attack(sc, (2, 1), (0, 0))


def test_toy_mixture_is_local():
    sc = canonical_toy_scenario()
    value = true_bell_value(sc.mixture)
    assert value == pytest.approx(0.75)
    assert value >= 1 / 4
    # the same L evaluated by a tester whose input equals the source value looks perfect
    boxes = {edge_of(4, *s): sc.local_boxes[s] for s in CHSH_INPUTS}
    assert observed_bell_value(boxes, {e: 0.25 for e in boxes}) == 0.0

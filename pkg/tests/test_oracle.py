import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atlab import oracle
from atlab.lattice import BoxRegion, EdgeConfig, Region, block
from atlab.limits import CapExceeded
from atlab.spins import ALT, FREE, PLUS, SpinPair
from atlab.weights import Couplings, gat_fkg
from conftest import bfs_clusters, bfs_connected, brute_at, generative_edge_law

POINT = Region([(0, 0)])
DOMINO = block(1, 2)
BLOCK = block(2, 2)


@st.composite
def sampling_couplings(draw, scale=0.8):
    Kpp = draw(st.floats(-scale, scale))
    K = abs(Kpp) + draw(st.floats(0.0, scale))
    Kp = draw(st.floats(-scale, scale))
    return Couplings(K, Kp, Kpp)


def _pair_probs_by_state(mu):
    S, T = mu.meta["S"], mu.meta["T"]
    p = mu.probs
    return {(tuple(S[k // len(T)]), tuple(T[k % len(T)])): p[k] for k in range(len(p))}


# ------------------------------------------------------------- spin laws

@pytest.mark.parametrize("bcs", [(PLUS, PLUS), (PLUS, FREE), (FREE, ALT), (ALT, PLUS)])
def test_at_law_matches_direct_hamiltonian(bcs):
    c = Couplings(0.3, -0.2, 0.15)
    for region in (POINT, DOMINO):
        ref = brute_at(region, c.K, c.Kp, c.Kpp, *bcs)
        got = _pair_probs_by_state(oracle.at_law(region, c, *bcs))
        assert set(ref) == set(got)
        assert max(abs(ref[k] - got[k]) for k in ref) <= 1e-13


def test_point_four_state_hand_enumeration():
    K, Kp, Kpp = 0.3, 0.2, -0.15
    w = {(a, b): math.exp(4 * (K * a + Kp * b + Kpp * a * b)) for a in (1, -1) for b in (1, -1)}
    Z = sum(w.values())
    s0 = (w[1, 1] + w[1, -1] - w[-1, 1] - w[-1, -1]) / Z
    pe = oracle.PairEnumeration(POINT, Couplings(K, Kp, Kpp), PLUS, PLUS)
    origin = POINT.index[(0, 0)]
    assert pe.magnetisation(origin, 0) == pytest.approx(s0, abs=1e-14)
    gat = oracle.gat_law(POINT, Couplings(K, Kp, Kpp), 1, PLUS)
    _, roots = oracle.cluster_roots(POINT, gat)
    hit = (roots[:, np.flatnonzero(~POINT.interior)] == roots[:, [origin]]).any(axis=1)
    assert abs(gat.expect(hit.astype(float)) - s0) <= 1e-12


def test_zero_couplings_give_unit_weight_and_zero_magnetisation():
    c = Couplings(0.0, 0.0, 0.0)
    mu = oracle.at_law(DOMINO, c, PLUS, FREE)
    assert np.all(mu.logw == 0)
    pe = oracle.PairEnumeration(POINT, c, PLUS, PLUS)
    assert pe.magnetisation(POINT.index[(0, 0)]) == 0.0


def test_all_plus_weight():
    c = Couplings(0.2, 0.3, 0.1)
    pair = SpinPair.from_boundary(BLOCK, PLUS, PLUS)
    assert oracle.at_weight(pair, c) == pytest.approx(math.exp(0.6 * BLOCK.n_edges), rel=1e-14)


def test_disagreement_form_differs_by_a_constant():
    c = Couplings(0.4, -0.3, 0.2)
    mu = oracle.at_law(DOMINO, c, FREE, FREE)
    S, T = mu.meta["S"], mu.meta["T"]
    diffs = [oracle.log_at_weight(SpinPair(DOMINO, s, t, FREE, FREE), c)
             - oracle.log_at_weight_disagreement(SpinPair(DOMINO, s, t, FREE, FREE), c)
             for s in S for t in T]
    assert np.ptp(diffs) <= 1e-12


@pytest.mark.parametrize("bcs", [(PLUS, FREE), (FREE, FREE), (FREE, PLUS), (PLUS, ALT)])
def test_leaf_elimination_preserves_the_law(bcs):
    c = Couplings(0.35, 0.25, -0.1)
    fast = oracle.PairEnumeration(BLOCK, c, *bcs)
    slow = oracle.PairEnumeration(BLOCK, c, *bcs, eliminate_leaves=False)
    inside = np.flatnonzero(BLOCK.interior)
    for x in inside:
        assert fast.magnetisation(x, 0) == pytest.approx(slow.magnetisation(x, 0), abs=1e-13)
        assert fast.product_moment(x) == pytest.approx(slow.product_moment(x), abs=1e-13)
    np.testing.assert_allclose(fast.edge_open_probabilities(), slow.edge_open_probabilities(), atol=1e-13)


# ----------------------------------------------------------- edge laws

def _joint_marginal_over_omega(region, c, bc_s, bc_t):
    """sum over ω of the joint weight, per (s, t)."""
    E = region.n_edges
    fill = int(bc_s.is_plus)
    out = {}
    for s in oracle.LayerStates(region, bc_s).spins:
        for t in oracle.LayerStates(region, bc_t).spins:
            pair = SpinPair(region, s, t, bc_s, bc_t)
            out[(tuple(s), tuple(t))] = sum(
                oracle.joint_weight(pair, EdgeConfig.from_code(w, E, fill), c) for w in range(1 << E))
    return out


def test_joint_weight_sums_to_spin_weight_up_to_a_constant(rng):
    for _ in range(20):
        Kpp = rng.uniform(-0.5, 0.5)
        c = Couplings(abs(Kpp) + rng.uniform(0, 0.5), rng.uniform(-0.5, 0.5), Kpp)
        joint = _joint_marginal_over_omega(POINT, c, PLUS, FREE)
        ratios = [math.log(v) - oracle.log_at_weight(SpinPair(POINT, np.array(s), np.array(t), PLUS, FREE), c)
                  for (s, t), v in joint.items()]
        assert np.ptp(ratios) <= 1e-12


def test_joint_weight_vanishes_on_open_disagreement():
    c = Couplings(0.4, 0.1, 0.1)
    s = PLUS.values_on(POINT).copy()
    s[POINT.index[(0, 0)]] = -1
    pair = SpinPair(POINT, s, PLUS.values_on(POINT), PLUS, PLUS)
    omega = EdgeConfig(np.array([True, False, False, False]), 1)
    assert oracle.joint_weight(pair, omega, c) == 0.0


@pytest.mark.parametrize("bcs", [(PLUS, FREE), (PLUS, PLUS), (FREE, FREE), (FREE, PLUS)])
def test_gat_law_matches_generative_construction(bcs):
    c = Couplings(0.45, 0.2, -0.15)
    for region in (POINT, DOMINO):
        ref = generative_edge_law(region, c.K, c.Kp, c.Kpp, *bcs)
        got = oracle.gat_law(region, c, int(bcs[0].is_plus), bcs[1]).probs
        assert 0.5 * np.abs(ref - got).sum() <= 1e-13


@given(sampling_couplings(), st.sampled_from([0, 1]), st.sampled_from([FREE, PLUS, ALT]))
def test_gat_closed_form_equals_joint_marginal(c, fill, bt):
    a = oracle.gat_law(BLOCK, c, fill, bt)
    b = oracle.gat_law_from_joint(BLOCK, c, fill, bt)
    assert oracle.tv_distance(a, b) <= 1e-12


def test_fk_ising_special_case():
    c = Couplings(0.3, 0.0, 0.0)
    mu = oracle.gat_law(DOMINO, c, 0, FREE)
    E = DOMINO.n_edges
    p = 1 - math.exp(-0.6)
    ref = np.array([(p / (1 - p)) ** bin(w).count("1")
                    * 2 ** bfs_clusters(DOMINO, EdgeConfig.from_code(w, E).open, 0) for w in range(1 << E)])
    assert oracle.tv_arrays(mu.probs, ref / ref.sum()) <= 1e-13


def test_degenerate_branch_is_the_limit():
    K, Kp = 0.4, 0.2
    exact = oracle.gat_law(DOMINO, Couplings(K, Kp, -K), 1, FREE)
    near = oracle.gat_law(DOMINO, Couplings(K, Kp, -K + 1e-10), 1, FREE)
    assert oracle.tv_distance(exact, near) <= 1e-9


def test_no_edges_gives_point_mass():
    r = Region([(0, 0)])
    r_empty = Region([], 2)
    mu = oracle.gat_law(r_empty, Couplings(0.3, 0.1, 0.0), 1)
    assert len(mu) == 1 and mu.probs[0] == 1.0
    assert len(oracle.gat_law(r, Couplings(0.3, 0.1, 0.0), 1)) == 16


def test_gat_law_requires_sampling_condition():
    with pytest.raises(ValueError):
        oracle.gat_law(DOMINO, Couplings(0.1, 0.2, 0.5), 1)


def test_edge_cap():
    with pytest.raises(CapExceeded):
        oracle.gat_law(BoxRegion(2, 1), Couplings(0.3, 0.1, 0.0), 1)


# -------------------------------------------------------- connectivity

@given(sampling_couplings(), st.sampled_from([(PLUS, FREE), (FREE, FREE), (PLUS, PLUS), (FREE, PLUS)]))
def test_correlation_equals_connection(c, bcs):
    rows = oracle.correlation_equals_connection(DOMINO, c, *bcs)
    assert max(r[5] for r in rows) <= 1e-12


def test_connection_probability_against_breadth_first_search():
    c = Couplings(0.5, 0.1, 0.2)
    mu = oracle.gat_law(DOMINO, c, 0, FREE)
    x, y = (DOMINO.index[v] for v in [(0, 0), (0, 1)])
    p = mu.probs
    ref = sum(p[w] for w in range(len(p))
              if bfs_connected(DOMINO, EdgeConfig.from_code(w, DOMINO.n_edges).open, 0, x, y))
    assert oracle.connection_probability(DOMINO, mu, x, y) == pytest.approx(ref, abs=1e-13)


# --------------------------------------------------------- inequalities

def test_finite_energy_example_is_exhaustive():
    out = oracle.finite_energy_check(BLOCK, Couplings(0.4, 0.3, -0.1), 0, FREE)
    assert out["n_checked"] == 12 * 2 ** 11
    assert out["min_slack"] >= -1e-12


@given(sampling_couplings(), st.sampled_from([0, 1]))
def test_finite_energy_bounds_hold(c, fill):
    if c.K + c.Kpp <= 1e-6:
        return
    assert oracle.finite_energy_check(DOMINO, c, fill, FREE)["min_slack"] >= -1e-12


def test_finite_energy_bounds_are_ordered(rng):
    for _ in range(500):
        Kpp = rng.uniform(-1, 1)
        c = Couplings(abs(Kpp) + rng.uniform(0.01, 1), rng.uniform(-1, 1), Kpp)
        lo, hi = oracle.finite_energy_bounds(c)
        assert lo <= hi


@pytest.mark.parametrize("c", [Couplings(0.5, 0.5, -0.05), Couplings(0.3, 0.3, 0.3), Couplings(0.4, 0.0, 0.0)])
def test_fkg_lattice_condition_examples(c):
    assert gat_fkg(c)
    out = oracle.fkg_lattice_check(BLOCK, c, 1, FREE)
    assert out["passed"] and out["worst_margin"] >= -1e-13


def _up_sets(n_bits):
    """Every increasing event on {0,1}^n_bits, as boolean masks over codes."""
    m = 1 << n_bits
    codes = np.arange(m)
    above = np.array([[(i & ~j) == 0 for j in codes] for i in codes])  # above[i, j]: i <= j
    out = []
    for subset in range(1 << m):
        mask = ((subset >> codes) & 1).astype(bool)
        if np.all(~mask[:, None] | ~above | mask[None, :]):
            out.append(mask)
    return out


UP_SETS = None


def _dominated_by_up_sets(p, q):
    global UP_SETS
    if UP_SETS is None:
        UP_SETS = _up_sets(4)
    return all(p[A].sum() <= q[A].sum() + 1e-12 for A in UP_SETS)


def _measure(p):
    with np.errstate(divide="ignore"):
        return oracle.EnumeratedMeasure("edges", np.arange(len(p)), np.log(p), {"edges": tuple(range(4))})


def test_up_set_count_is_dedekind():
    global UP_SETS
    UP_SETS = UP_SETS or _up_sets(4)
    assert len(UP_SETS) == 168


@given(st.lists(st.floats(0.0, 1.0), min_size=16, max_size=16),
       st.lists(st.floats(0.0, 1.0), min_size=16, max_size=16))
def test_exact_domination_agrees_with_up_set_enumeration(a, b):
    p, q = np.array(a) + 1e-3, np.array(b) + 1e-3
    p, q = p / p.sum(), q / q.sum()
    got = oracle.stochastic_domination_check(_measure(p), _measure(q))["dominated"]
    assert got == _dominated_by_up_sets(p, q)


def test_domination_on_monotone_pairs(rng):
    for _ in range(20):
        p = rng.random(16)
        p /= p.sum()
        # push mass upward by opening a random edge with probability 1/2
        e = rng.integers(4)
        q = p / 2
        np.add.at(q, np.arange(16) | (1 << e), p / 2)
        assert _dominated_by_up_sets(p, q)
        assert oracle.stochastic_domination_check(_measure(p), _measure(q))["dominated"]


def test_domination_trivial_cases():
    p = np.full(16, 1 / 16)
    assert oracle.stochastic_domination_check(_measure(p), _measure(p))["dominated"]
    low, high = np.zeros(16), np.zeros(16)
    low[0], high[15] = 1.0, 1.0
    assert oracle.stochastic_domination_check(_measure(low), _measure(high))["dominated"]
    assert not oracle.stochastic_domination_check(_measure(high), _measure(low))["dominated"]


def test_holley_certificate_implies_domination():
    lo = oracle.gat_law(POINT, Couplings(0.2, 0.3, 0.0), 1)
    hi = oracle.gat_law(POINT, Couplings(0.6, 0.3, 0.0), 1)
    assert oracle.stochastic_domination_check(lo, hi, mode="holley")["result"] == "certified"
    assert _dominated_by_up_sets(lo.probs, hi.probs)


def test_maximality_on_point_inside_domino():
    out = oracle.maximality_check(POINT, DOMINO, Couplings(0.5, 0.5, -0.05))
    assert out["all_dominated"] and out["exhaustive"]


def test_griffiths_examples(rng):
    x, y = BLOCK.index[(0, 0)], BLOCK.index[(0, 1)]
    out = oracle.griffiths_check(BLOCK, 0.4, 0.2, -0.1, [])
    assert out["moment"] == pytest.approx(1.0) and out["event_probability"] == pytest.approx(1.0)
    out = oracle.griffiths_check(BLOCK, 0.4, 0.2, -0.1, [x, x])
    assert out["moment"] == pytest.approx(1.0)
    for _ in range(5):
        J, Jp, U = abs(rng.uniform(-0.6, 0.6)), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)
        J = max(J, min(abs(Jp), abs(U)))
        out = oracle.griffiths_check(BLOCK, J, Jp, U, [x, y])
        assert out["gap"] <= 1e-12 and out["moment"] >= -1e-12


def test_russo_inequality_example():
    x = int(np.flatnonzero(BLOCK.interior)[0])
    out = oracle.russo_check(BLOCK, 0.25, 0.5, 0.5, oracle.boundary_event(BLOCK, x))
    assert out["holds"] and out["lhs"] >= out["rhs"] - 1e-8
    const = oracle.russo_check(BLOCK, 0.25, 0.5, 0.5, lambda codes: np.ones(len(codes)))
    assert abs(const["lhs"]) <= 1e-8 and abs(const["rhs"]) <= 1e-12


def test_boundary_event_probability_rises_along_the_curve():
    from atlab import curves

    x = int(np.flatnonzero(BLOCK.interior)[0])
    event = oracle.boundary_event(BLOCK, x)
    codes = oracle.edge_states(BLOCK)
    X = event(codes)
    values = [oracle.gat_law(BLOCK, curves.gamma(0.25, 0.5, b).couplings, 1, FREE).expect(X)
              for b in np.linspace(0.05, 0.95, 10)]
    assert np.all(np.diff(values) >= -1e-12)


# --------------------------------------------------------- pair coupling

@given(st.floats(0.05, 0.8), st.floats(0.05, 0.8), st.floats(-0.3, 0.3),
       st.sampled_from([0, 1]), st.sampled_from([0, 1]))
def test_pair_coupling_marginals_on_domino(K, Kp, Kpp, fill, fill2):
    c = Couplings(K + abs(Kpp), Kp + abs(Kpp), Kpp)
    from atlab.weights import atrc_weights

    if min(atrc_weights(c)[:3]) < 0:
        return
    first, second = oracle.atrc_marginals(DOMINO, c, fill, fill2)
    pair = oracle.atrc_pair_measure(DOMINO, c, fill, fill2)
    P = pair.probs.reshape(len(first), len(second))
    assert oracle.tv_arrays(first.probs, P.sum(axis=1)) <= 1e-12
    assert oracle.tv_arrays(second.probs, P.sum(axis=0)) <= 1e-12
    ga = oracle.gat_law(DOMINO, c, fill, PLUS if fill2 else FREE)
    gb = oracle.gat_law(DOMINO, c.permuted((1, 0, 2)), fill2, PLUS if fill else FREE)
    assert oracle.tv_distance(first, ga) <= 1e-12
    assert oracle.tv_distance(second, gb) <= 1e-12


def test_pair_coupling_nests_when_u1_vanishes():
    c = Couplings(0.3, 0.5, 0.3)
    pair = oracle.atrc_pair_measure(DOMINO, c, 1, 0)
    E = DOMINO.n_edges
    w, wp = pair.states >> E, pair.states & ((1 << E) - 1)
    support = pair.probs > 0
    assert np.all((w[support] & ~wp[support]) == 0)

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atlab import curves
from atlab.lattice import Region, block
from atlab.weights import af_fkg, atrc_weights, gat_weights, iso_af_fkg


def test_beta_bounds_example():
    lo, hi = curves.beta_bounds(0.25, 0.5)
    assert lo == pytest.approx(0.75 * math.log(2), abs=1e-15)
    assert hi == pytest.approx(math.log(2), abs=1e-15)
    assert lo == pytest.approx(0.519860, abs=1e-6) and hi == pytest.approx(0.693147, abs=1e-6)


def test_inner_point_example():
    c = curves.gamma_inner(0.25, 0.5, 0.6)
    assert c.K == pytest.approx(0.393420, abs=1e-6)
    assert c.Kp == 0.6
    assert c.Kpp == pytest.approx(-0.093147, abs=1e-6)
    assert gat_weights(c)[1] == pytest.approx(0.25, abs=1e-15)


@given(st.floats(0.05, 0.9), st.floats(0.05, 0.95), st.floats(0.001, 0.999))
def test_curve_pins_w2_and_w3(kappa, ratio, beta):
    kappa_p = kappa + ratio * (1 - kappa)
    if kappa_p <= kappa:
        return
    p = curves.gamma(kappa, kappa_p, beta)
    _, w2, w3 = gat_weights(p.couplings)
    assert abs(w2 - kappa) <= 1e-12
    assert abs(w3 - kappa_p) <= 1e-12
    assert af_fkg(*p.couplings.original())


def test_w1_increases_along_the_curve():
    betas = np.linspace(0.001, 0.999, 500)
    w1 = [gat_weights(curves.gamma(0.25, 0.5, b).couplings)[0] for b in betas]
    assert np.all(np.diff(w1) > 0)


def test_slope_matches_finite_differences_and_bound():
    kappa, kappa_p = 0.25, 0.5
    lo, hi = curves.beta_bounds(kappa, kappa_p)
    h = 1e-6
    for beta in np.linspace(0.05, 0.95, 19):
        f = lambda b: math.log(gat_weights(curves.gamma(kappa, kappa_p, b).couplings)[0])
        fd = (f(beta + h) - f(beta - h)) / (2 * h)
        exact = float(curves.log_w1_slope(kappa, kappa_p, beta))
        assert fd == pytest.approx(exact, rel=1e-6)
        # in the inner coordinate the slope stays above 4κ/(κ'-κ)
        assert exact / (hi - lo) > 4 * kappa / (kappa_p - kappa)


def test_isotropic_example():
    p = curves.hat_gamma(0.5, 2.0)
    mpmath.mp.dps = 30
    assert p.couplings.K == pytest.approx(float(mpmath.log(7) / 4), abs=1e-15)
    assert p.couplings.Kpp == pytest.approx(float(mpmath.log(7) / 4 - mpmath.log(3) / 2), abs=1e-15)
    u1, _, _, hat = atrc_weights(p.couplings)
    assert u1 == pytest.approx(2.0, abs=1e-12) and hat == pytest.approx(0.5, abs=1e-12)


@given(st.floats(0.01, 0.99), st.floats(1e-4, 50.0))
def test_isotropic_curve_pins_u1_and_hat_u3(kappa, t):
    p = curves.hat_gamma(kappa, t)
    u1, _, _, hat = atrc_weights(p.couplings)
    assert abs(u1 - t) <= 1e-12 * max(1.0, t)
    assert abs(hat - kappa) <= 1e-12
    J, Jp, U = p.couplings.original()
    assert iso_af_fkg(J, Jp, U)
    assert math.cosh(2 * J) - math.exp(-2 * U) > 0


def test_isotropic_curve_starts_at_zero():
    p = curves.hat_gamma(0.5, 1e-12)
    assert abs(p.couplings.K) < 1e-11 and abs(p.couplings.Kpp) < 1e-11


def test_invalid_parameters():
    with pytest.raises(ValueError):
        curves.gamma(0.5, 0.25, 0.5)
    with pytest.raises(ValueError):
        curves.gamma(0.25, 0.5, 1.0)
    with pytest.raises(ValueError):
        curves.hat_gamma(0.5, -1.0)


def test_jump_monotonicity_example():
    out = curves.jump_monotonicity_check(Region([(0, 0)]), 0.5, 1.0, 2.5)
    assert out["condition"] and out["dominated"]
    back = curves.jump_monotonicity_check(Region([(0, 0)]), 0.5, 2.5, 1.0)
    assert not back["dominated"]


def test_jump_on_domino():
    out = curves.jump_monotonicity_check(block(1, 2), 0.4, 0.3, 1.5)
    assert out["dominated"]


def test_theta_zero_is_one_and_theta_one_is_monotone():
    assert curves.theta_exact(0.25, 0.5, 0.3, 0) == 1.0
    values = [curves.theta_exact(0.25, 0.5, b, 1) for b in np.linspace(0.02, 0.98, 20)]
    assert np.all(np.diff(values) >= 0)
    assert all(0 <= v <= 1 for v in values)
    with pytest.raises(ValueError):
        curves.theta_exact(0.25, 0.5, 0.3, 2)


def test_crossing_interpolates():
    assert curves.crossing([0, 1, 2], [0.0, 0.4, 0.8], 0.6) == pytest.approx(1.5)
    assert curves.crossing([0, 1], [0.0, 0.1], 0.5) is None
    assert curves.crossing([0, 1], [0.7, 0.9], 0.5) == 0.0


def test_bootstrap_interval_contains_point_estimate():
    betas = np.linspace(0, 1, 11)
    values = betas.copy()
    lo, hi = curves.bootstrap_crossing(betas, values, np.full(11, 0.01), 0.5, seed=1)
    assert lo <= 0.5 <= hi


def test_theta_scan_tables():
    out = curves.theta_scan(0.25, 0.5, [0.2, 0.5, 0.8], [0, 1])
    assert len(out["theta"]) == 6
    S = [r["S"] for r in out["S"] if r["n"] == 2]
    assert all(s >= 1 for s in S)


def test_edge_density_sum_rises_with_t():
    rows = curves.edge_density_scan(0.5, [0.5, 1.0, 2.0, 4.0], n=1)
    sums = [r["sum"] for r in rows]
    assert np.all(np.diff(sums) >= 0)
    same = curves.edge_density_scan(0.5, [1.0, 1.0], n=1)
    assert same[0]["sum"] == same[1]["sum"]


def test_curve_contracts_and_margin():
    dev = curves.curve_contracts(0.25, 0.5, np.linspace(0.01, 0.99, 99))
    assert dev["w2"] <= 1e-12 and dev["w3"] <= 1e-12
    assert curves.af_fkg_margin(curves.gamma(0.25, 0.5, 0.5).couplings) >= 0

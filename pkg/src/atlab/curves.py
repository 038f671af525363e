"""Explicit curve families through the antiferromagnetic FKG regime, plus the
threshold and edge-density scans run along them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import BoxRegion, Region
from .spins import FREE, PLUS
from .weights import Couplings, WeightSet, gat_weights, weight_set


@dataclass
class CurvePoint:
    family: str
    params: tuple
    coordinate: float
    couplings: Couplings
    weights: WeightSet


def beta_bounds(kappa: float, kappa_p: float) -> tuple:
    """(β⁻, β⁺): the inner coordinate runs over this interval."""
    return -0.25 * math.log(kappa * kappa_p), -0.5 * math.log(kappa)


def _check_pair(kappa, kappa_p):
    if not 0 < kappa < kappa_p <= 1:
        raise ValueError("need 0 < κ < κ' <= 1")


def _gamma_offset(kappa: float, kappa_p: float, delta: float) -> Couplings:
    """Curve point at inner coordinate β⁺ - delta.

    K + K'' is formed without cancellation so w1 keeps full relative
    accuracy as delta goes to 0.
    """
    hi = beta_bounds(kappa, kappa_p)[1]
    arg = -kappa * math.expm1(4 * delta) / (kappa_p - kappa)
    if not delta > 0 or not arg > -1:
        raise ValueError("inner coordinate outside the curve's range")
    total = -0.5 * math.log1p(arg)
    return Couplings(total + delta, hi - delta, -delta)


def gamma_inner(kappa: float, kappa_p: float, bt: float) -> Couplings:
    """Curve point at inner coordinate bt in (β⁻, β⁺)."""
    _check_pair(kappa, kappa_p)
    return _gamma_offset(kappa, kappa_p, beta_bounds(kappa, kappa_p)[1] - bt)


def gamma(kappa: float, kappa_p: float, beta: float) -> CurvePoint:
    _check_pair(kappa, kappa_p)
    if not 0 < beta < 1:
        raise ValueError("β must lie in (0, 1)")
    lo, hi = beta_bounds(kappa, kappa_p)
    c = _gamma_offset(kappa, kappa_p, beta * (hi - lo))
    return CurvePoint("gamma", (kappa, kappa_p), beta, c, weight_set(c))


def log_w1_slope(kappa: float, kappa_p: float, beta):
    """d/dβ log w1 along the curve, in closed form."""
    lo, hi = beta_bounds(kappa, kappa_p)
    bt = hi - np.asarray(beta, dtype=float) * (hi - lo)
    y = np.exp(-4 * bt)
    inner = 4 * kappa * (kappa_p - kappa) * y / ((kappa * kappa_p - y) * (y - kappa * kappa))
    return (hi - lo) * inner


def gamma_slope_infimum(kappa: float, kappa_p: float, n_grid: int = 2001, extra=()) -> float:
    """Smallest value of d/dβ log w1 over a uniform grid of (0, 1)."""
    grid = np.concatenate([np.linspace(0, 1, n_grid + 2)[1:-1], np.asarray(extra, dtype=float)])
    return float(np.min(log_w1_slope(kappa, kappa_p, grid)))


def hat_gamma(kappa: float, t: float) -> CurvePoint:
    """Isotropic curve point with u1 = t and û3 = κ."""
    if not 0 < kappa < 1:
        raise ValueError("κ must lie in (0, 1)")
    if not t > 0:
        raise ValueError("t must be positive")
    J = 0.25 * math.log1p(kappa * t * t + 2 * t)
    # J - log1p(t) / 2, rearranged so small t keeps full relative accuracy
    U = 0.25 * math.log1p((kappa - 1) * t * t / ((1 + t) * (1 + t)))
    c = Couplings(J, J, U)
    return CurvePoint("hat_gamma", (kappa,), t, c, weight_set(c))


def hat_gamma_beta(kappa: float, beta: float) -> CurvePoint:
    """Same curve indexed by β in (0, 1) through t = β / (1 - β)."""
    if not 0 < beta < 1:
        raise ValueError("β must lie in (0, 1)")
    return hat_gamma(kappa, beta / (1 - beta))


def jump_condition(kappa: float, t1: float, t2: float) -> bool:
    return t1 <= kappa * t2


def jump_monotonicity_check(region: Region, kappa: float, t1: float, t2: float) -> dict:
    """Exact domination certificate GAT^{1,f}(t1) <= GAT^{1,f}(t2) along the isotropic curve."""
    from . import oracle

    lo = oracle.gat_law(region, hat_gamma(kappa, t1).couplings, 1, FREE)
    hi = oracle.gat_law(region, hat_gamma(kappa, t2).couplings, 1, FREE)
    out = oracle.stochastic_domination_check(lo, hi)
    out["condition"] = jump_condition(kappa, t1, t2)
    return out


# ------------------------------------------------------------------ scans

def theta_exact(kappa: float, kappa_p: float, beta: float, k: int) -> float:
    """θ_k by enumeration; only k <= 1 is reachable.

    For k = 1 the measure lives on B_1 rather than B_2, which is far beyond
    enumeration; the event {0 joined to a site off B_0} is unchanged.
    """
    if k == 0:
        return 1.0
    if k != 1:
        raise ValueError("exact θ_k is only available for k <= 1")
    from .oracle import PairEnumeration

    region = BoxRegion(2, 1)
    c = gamma(kappa, kappa_p, beta).couplings
    pe = PairEnumeration(region, c, PLUS, FREE)
    origin = region.index[(0, 0)]
    return 1.0 - pe.prob_all_closed(region.edges_at(region.vertices[origin]))


def theta_mc(kappa: float, kappa_p: float, beta: float, k: int, d: int = 2, **chain) -> tuple:
    """(θ_k, stderr) from chains on B_{2k} with boundary (+, f)."""
    if k == 0:
        return 1.0, 0.0
    from . import samplers

    region = BoxRegion(d, 2 * k)
    c = gamma(kappa, kappa_p, beta).couplings
    inner = {v for v in BoxRegion(d, k - 1).vertices if all(abs(x) <= k - 1 for x in v)}
    target = np.array([v not in inner for v in region.vertices])
    res = samplers.run_chains(region, c, PLUS, FREE, observables=("reach",), reach_target=target,
                              **chain)
    obs = res.series["reach"]
    return obs.mean, obs.stderr


def crossing(betas, values, level: float = 0.5):
    """First β where the piecewise linear interpolant reaches ``level`` (None if never)."""
    betas = np.asarray(betas, dtype=float)
    values = np.asarray(values, dtype=float)
    for i in range(len(betas)):
        if values[i] >= level:
            if i == 0:
                return float(betas[0])
            a, b = values[i - 1], values[i]
            return float(betas[i - 1] + (level - a) / (b - a) * (betas[i] - betas[i - 1]))
    return None


def bootstrap_crossing(betas, values, stderr, level=0.5, n_boot=200, seed=0):
    """Parametric bootstrap interval for :func:`crossing` (2.5% and 97.5% quantiles)."""
    rng = np.random.default_rng(seed)
    values = np.asarray(values, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    hits = []
    for _ in range(n_boot):
        x = crossing(betas, values + rng.standard_normal(len(values)) * stderr, level)
        if x is not None:
            hits.append(x)
    if not hits:
        return None, None
    return float(np.quantile(hits, 0.025)), float(np.quantile(hits, 0.975))


def theta_scan(kappa, kappa_p, betas, ks, backend="oracle", levels=(0.25, 0.5, 0.75), seed=0,
               **chain) -> dict:
    """θ_k(β) and S_n(β) tables with threshold-crossing estimates for each k."""
    rows = []
    table = {}
    for k in ks:
        vals, errs = [], []
        for b in betas:
            if backend == "oracle":
                v, e = theta_exact(kappa, kappa_p, b, k), 0.0
            else:
                v, e = theta_mc(kappa, kappa_p, b, k, seed=seed, **chain)
            vals.append(v)
            errs.append(e)
            rows.append({"k": k, "beta": b, "theta": v, "stderr": e})
        table[k] = (np.array(vals), np.array(errs))
    sums = []
    ks_sorted = sorted(ks)
    for j, b in enumerate(betas):
        acc = 0.0
        for k in ks_sorted:
            acc += table[k][0][j]
            sums.append({"n": k + 1, "beta": b, "S": acc})
    crossings = []
    for k in ks:
        vals, errs = table[k]
        for level in levels:
            lo, hi = bootstrap_crossing(betas, vals, errs, level, seed=seed) if backend != "oracle" \
                else (None, None)
            crossings.append({"k": k, "level": level, "beta_c": crossing(betas, vals, level),
                              "ci_low": lo, "ci_high": hi})
    return {"theta": rows, "S": sums, "crossings": crossings}


def edge_densities_exact(kappa: float, t: float, n: int = 1) -> tuple:
    """(density under GAT^{1,f}, density under GAT^{0,+}) on B_n at ĝ_κ(t)."""
    from .oracle import PairEnumeration

    region = BoxRegion(2, n)
    c = hat_gamma(kappa, t).couplings
    first = PairEnumeration(region, c, PLUS, FREE).edge_open_probabilities().sum()
    second = PairEnumeration(region, c, FREE, PLUS).edge_open_probabilities().sum()
    return first / region.n_edges, second / region.n_edges


def edge_densities_mc(kappa: float, t: float, n: int, d: int = 2, **chain) -> tuple:
    """Monte Carlo version; returns ((mean, stderr), (mean, stderr))."""
    from . import samplers

    region = BoxRegion(d, n)
    c = hat_gamma(kappa, t).couplings
    out = []
    for bs, bt in ((PLUS, FREE), (FREE, PLUS)):
        res = samplers.run_chains(region, c, bs, bt, observables=("edge_density",), **chain)
        s = res.series["edge_density"]
        out.append((s.mean, s.stderr))
    return tuple(out)


def edge_density_scan(kappa, ts, n=1, backend="oracle", **chain) -> list:
    rows = []
    for t in ts:
        if backend == "oracle":
            a, b = edge_densities_exact(kappa, t, n)
            ea = eb = 0.0
        else:
            (a, ea), (b, eb) = edge_densities_mc(kappa, t, n, **chain)
        rows.append({"t": t, "first": a, "first_stderr": ea, "second": b, "second_stderr": eb,
                     "sum": a + b, "sum_stderr": math.hypot(ea, eb)})
    return rows


def af_fkg_margin(c: Couplings) -> float:
    J, Jp, U = c.original()
    return math.tanh(U) + math.tanh(J) * math.tanh(Jp)


def curve_contracts(kappa, kappa_p, betas) -> dict:
    """Largest deviations of w2 from κ and w3 from κ' along the curve."""
    dev2 = dev3 = 0.0
    for b in betas:
        _, w2, w3 = gat_weights(gamma(kappa, kappa_p, b).couplings)
        dev2 = max(dev2, abs(w2 - kappa))
        dev3 = max(dev3, abs(w3 - kappa_p))
    return {"w2": dev2, "w3": dev3}

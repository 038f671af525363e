"""Named oracle checks run by ``atlab verify`` and the acceptance tests.

Each check returns a row dict with the worst margin it saw, the threshold it
was held to and whether it passed.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import contours, curves, limits, oracle, vertex
from .lattice import BoxRegion, DualGeometry, EdgeConfig, Region, block, euler_identity_check
from .spins import ALT, FREE, PLUS
from .weights import (Couplings, af_fkg, atrc_weights, eight_vertex_weights, gat_fkg, gat_weights,
                      iso_af_fkg)

TV_TOL = 1e-12
GAP_TOL = 1e-12
SLACK_TOL = 1e-12
FKG_TOL = 1e-13
RUSSO_TOL = 1e-8
BLOCKING_EXPECTED = {4: 1, 5: 0, 6: 4}


def _row(check, metric, value, threshold, passed, n, started, **extra):
    row = {"check": check, "metric": metric, "value": float(value), "threshold": threshold,
           "passed": bool(passed), "n": int(n), "seconds": round(time.perf_counter() - started, 3)}
    row.update(extra)
    return row


def random_couplings(rng, kind="sampling", scale=0.6):
    """Rejection sampler for coupling triples meeting the conditions of a check."""
    for _ in range(100_000):
        Kpp = rng.uniform(-scale, scale)
        K = abs(Kpp) + rng.uniform(0, scale)
        Kp = rng.uniform(-scale, scale)
        c = Couplings(K, Kp, Kpp)
        if kind == "sampling":
            return c
        if kind == "energy" and K + Kpp > 1e-3:
            return c
        if kind == "fkg" and gat_fkg(c):
            return c
        if kind == "atrc" and min(atrc_weights(c)[:3]) >= 0:
            return c
    raise RuntimeError(f"could not draw a {kind} point")


def enumeration_region(region: Region) -> Region:
    """``region`` itself when the edge-law oracles can handle it, else the 2x2 block."""
    if region.n_edges <= limits.MAX_GAT_EDGES and region.d == 2:
        return region
    return block(2, 2)


# ------------------------------------------------------------ closures

def gat_closure(region, points, rng):
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for _ in range(points):
        c = random_couplings(rng)
        for fill in (0, 1):
            for bt in (FREE, PLUS):
                a = oracle.gat_law(region, c, fill, bt)
                b = oracle.gat_law_from_joint(region, c, fill, bt)
                worst = max(worst, oracle.tv_distance(a, b))
                n += 1
    return _row("gat_closure", "max_tv", worst, TV_TOL, worst <= TV_TOL, n, t0)


def atrc_closure(region, points, rng):
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for _ in range(points):
        c = random_couplings(rng, "atrc")
        for fill in (0, 1):
            for fill2 in (0, 1):
                first, second = oracle.atrc_marginals(region, c, fill, fill2)
                ga = oracle.gat_law(region, c, fill, PLUS if fill2 else FREE)
                gb = oracle.gat_law(region, c.permuted((1, 0, 2)), fill2, PLUS if fill else FREE)
                worst = max(worst, oracle.tv_distance(first, ga), oracle.tv_distance(second, gb))
                n += 2
    return _row("atrc_closure", "max_tv", worst, TV_TOL, worst <= TV_TOL, n, t0)


def vertex_closure(region, points, rng):
    t0 = time.perf_counter()
    geom = DualGeometry(region)
    worst, n = 0.0, 0
    for _ in range(points):
        c = random_couplings(rng)
        for bt in (FREE, PLUS, ALT):
            a = vertex.eightv_law(geom, eight_vertex_weights(c), bt)
            b = vertex.coupling_pushforward(geom, c, bt)
            worst = max(worst, oracle.tv_distance(a, b))
            n += 1
    return _row("vertex_closure", "max_tv", worst, TV_TOL, worst <= TV_TOL, n, t0)


def correlation_connection(region, points, rng):
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for _ in range(points):
        c = random_couplings(rng)
        for bs in (PLUS, FREE):
            for bt in (FREE, PLUS):
                rows = oracle.correlation_equals_connection(region, c, bs, bt)
                worst = max([worst] + [r[5] for r in rows])
                n += len(rows)
    return _row("correlation_connection", "max_gap", worst, GAP_TOL, worst <= GAP_TOL, n, t0)


# --------------------------------------------------------- inequalities

def finite_energy(region, points, rng):
    t0 = time.perf_counter()
    worst, n = math.inf, 0
    for _ in range(points):
        c = random_couplings(rng, "energy")
        for fill in (0, 1):
            for bt in (FREE, PLUS):
                out = oracle.finite_energy_check(region, c, fill, bt)
                worst = min(worst, out["min_slack"])
                n += out["n_checked"]
    return _row("finite_energy", "min_slack", worst, -SLACK_TOL, worst >= -SLACK_TOL, n, t0)


def fkg_lattice(region, points, rng):
    t0 = time.perf_counter()
    worst, n = math.inf, 0
    for _ in range(points):
        c = random_couplings(rng, "fkg")
        for fill in (0, 1):
            out = oracle.fkg_lattice_check(region, c, fill, FREE, tol=FKG_TOL)
            worst = min(worst, out["worst_margin"])
            n += 1
    return _row("fkg_lattice", "worst_margin", worst, -FKG_TOL, worst >= -FKG_TOL, n, t0)


def jump_triples(rng, count):
    out = []
    while len(out) < count:
        kappa = rng.uniform(0.1, 0.9)
        t2 = rng.uniform(0.5, 4.0)
        t1 = rng.uniform(0.02, 1.0) * kappa * t2
        out.append((kappa, t1, t2))
    return out


def strassen_jumps(triples, regions=None):
    """Exact domination certificates along the isotropic curve."""
    t0 = time.perf_counter()
    regions = regions or [Region([(0, 0)]), block(1, 2)]
    failures, n = 0, 0
    for kappa, t1, t2 in triples:
        if not curves.jump_condition(kappa, t1, t2):
            raise ValueError("triple does not satisfy the jump condition")
        for r in regions:
            out = curves.jump_monotonicity_check(r, kappa, t1, t2)
            failures += not out["dominated"]
            n += 1
    return _row("strassen_jumps", "failures", failures, 0, failures == 0, n, t0)


def maximality(points, rng):
    t0 = time.perf_counter()
    failures, n = 0, 0
    small, big = Region([(0, 0)]), block(1, 2)
    for _ in range(points):
        c = random_couplings(rng, "fkg")
        out = oracle.maximality_check(small, big, c)
        failures += not out["all_dominated"]
        n += out["checked"]
    return _row("maximality", "failures", failures, 0, failures == 0, n, t0)


def russo(region, betas, kappa=0.25, kappa_p=0.5):
    t0 = time.perf_counter()
    event = oracle.boundary_event(region, int(np.flatnonzero(region.interior)[0]))
    eps = curves.gamma_slope_infimum(kappa, kappa_p, extra=betas)
    worst = min(oracle.russo_check(region, kappa, kappa_p, b, event, eps=eps)["slack"] for b in betas)
    return _row("russo", "min_slack", worst, -RUSSO_TOL, worst >= -RUSSO_TOL, len(betas), t0, eps=eps)


def griffiths(region, points, rng):
    t0 = time.perf_counter()
    inside = np.flatnonzero(region.interior)
    worst, n = 0.0, 0
    for _ in range(points):
        while True:
            J, Jp, U = rng.uniform(-0.6, 0.6, size=3)
            J = abs(J)
            if J >= min(abs(Jp), abs(U)):
                break
        A = rng.choice(inside, size=rng.integers(1, min(4, len(inside)) + 1), replace=False)
        out = oracle.griffiths_check(region, J, Jp, U, A)
        worst = max(worst, out["gap"])
        n += 1
    return _row("griffiths", "max_gap", worst, GAP_TOL, worst <= GAP_TOL, n, t0)


# ------------------------------------------------------- combinatorics

def euler(region, samples, rng):
    t0 = time.perf_counter()
    geom = DualGeometry(region)
    failures = 0
    for _ in range(samples):
        omega = EdgeConfig(rng.random(region.n_edges) < rng.random(), 0)
        failures += not euler_identity_check(geom, omega)
    return _row("euler", "failures", failures, 0, failures == 0, samples, t0)


def contour_counts(max_k=10, n=3):
    t0 = time.perf_counter()
    mismatch = sum(len(contours.enumerate_blocking(None, k)) != v for k, v in BLOCKING_EXPECTED.items())
    box = BoxRegion(2, n)
    violations = 0
    counts = {}
    for k in range(1, max_k + 1):
        out = contours.bound_check(box, k)
        counts[k] = out["count"]
        violations += not (out["holds"] and out["degree_ok"])
    bad = mismatch + violations
    return _row("contours", "failures", bad, 0, bad == 0, max_k + len(BLOCKING_EXPECTED), t0,
                counts=counts)


def curve_contracts(n_grid=10_000, kappa=0.25, kappa_p=0.5, kappa_hat=0.5, t_max=10.0):
    t0 = time.perf_counter()
    betas = np.linspace(0, 1, n_grid + 2)[1:-1]
    ts = np.linspace(0, t_max, n_grid + 1)[1:]
    worst = 0.0
    members = 0
    for b, t in zip(betas, ts):
        p = curves.gamma(kappa, kappa_p, b)
        _, w2, w3 = gat_weights(p.couplings)
        worst = max(worst, abs(w2 - kappa), abs(w3 - kappa_p))
        members += af_fkg(*p.couplings.original())
        q = curves.hat_gamma(kappa_hat, float(t))
        u1, _, _, hat = atrc_weights(q.couplings)
        worst = max(worst, abs(u1 - t), abs(hat - kappa_hat))
        members += iso_af_fkg(*q.couplings.original())
    ok = worst <= TV_TOL and members == 2 * len(betas)
    return _row("curve_contracts", "max_deviation", worst, TV_TOL, ok, 2 * len(betas), t0,
                membership=members / (2 * len(betas)))


def run_suite(region: Region, points: int = 20, seed: int = 0, contour_k: int = 10) -> list:
    rng = np.random.default_rng(seed)
    small = enumeration_region(region)
    rows = [
        gat_closure(small, points, rng),
        atrc_closure(small, points, rng),
        vertex_closure(small, points, rng),
        correlation_connection(small, points, rng),
        finite_energy(small, points, rng),
        fkg_lattice(small, points, rng),
        strassen_jumps(jump_triples(rng, 10)),
        maximality(min(points, 5), rng),
        russo(small, list(np.linspace(0.05, 0.95, 10))),
        griffiths(small, points, rng),
        euler(region if region.d == 2 else small, 10 * points, rng),
        contour_counts(contour_k),
        curve_contracts(),
    ]
    for r in rows:
        r["region_sites"] = small.n_interior
    return rows

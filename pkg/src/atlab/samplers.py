"""Heat-bath chains for the AT pair and the layers derived from it: the
percolation configuration, the dual colouring and the height function.

Every random number is a function of (seed, chain, stream, counter), so runs
are reproducible whatever the number of worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import DualGeometry, Region, cluster_table
from .spins import ALT, FREE, Boundary, boundary_product, flip_odd_boundary
from .weights import Couplings, as_couplings, edge_probabilities, six_vertex_params

SPINS, EDGES, COLOURS, VIEW = 0, 1, 2, 3
N_BATCHES = 16
BLOCK = 2048


def stream_key(seed: int, chain: int, stream: int) -> np.uint64:
    ss = np.random.SeedSequence([int(seed), int(chain), int(stream)])
    return ss.generate_state(1, dtype=np.uint64)[0]


def default_workers() -> int:
    return max(1, int(os.environ.get("ATLAB_WORKERS", "1")))


@dataclass
class ChainState:
    region: Region
    couplings: Couplings
    bc_s: Boundary
    bc_t: Boundary
    s: np.ndarray
    t: np.ndarray
    seed: int = 0
    chain: int = 0
    sweep: int = 0

    @property
    def key(self):
        return stream_key(self.seed, self.chain, SPINS)


def initial_state(region, c, bc_s, bc_t, seed=0, chain=0, init="random") -> ChainState:
    """``random`` draws free spins uniformly, ``plus`` sets them to +1 and
    ``boundary`` continues each boundary pattern through the region."""
    c = as_couplings(c)
    s = bc_s.values_on(region).copy()
    t = bc_t.values_on(region).copy()
    fs, ft = bc_s.free_mask(region), bc_t.free_mask(region)
    if init == "random":
        rng = np.random.default_rng(int(stream_key(seed, chain, VIEW + 1)))
        s[fs] = rng.choice(np.array([-1, 1], dtype=np.int8), size=int(fs.sum()))
        t[ft] = rng.choice(np.array([-1, 1], dtype=np.int8), size=int(ft.sum()))
    elif init == "plus":
        s[fs] = 1
        t[ft] = 1
    elif init != "boundary":
        raise ValueError(f"unknown init {init!r}")
    return ChainState(region, c, bc_s, bc_t, s, t, seed, chain)


def _sweep_args(state: ChainState):
    r = state.region
    fs = state.bc_s.free_mask(r)
    ft = state.bc_t.free_mask(r)
    sites = np.flatnonzero(fs | ft).astype(np.int64)
    c = state.couplings
    return sites, fs, ft, r.inc_ptr, r.inc_nbr, c.K, c.Kp, c.Kpp


def glauber_sweep(state: ChainState, n_sweeps: int = 1) -> ChainState:
    """Systematic heat-bath sweeps; a site free in both layers draws both spins jointly."""
    sites, fs, ft, ptr, nbr, K, Kp, Kpp = _sweep_args(state)
    _kernels.run_sweeps(state.s, state.t, sites, fs, ft, ptr, nbr, K, Kp, Kpp, state.key,
                        state.sweep, n_sweeps)
    state.sweep += n_sweeps
    return state


def record(state: ChainState, n_samples: int, thin: int = 1):
    """Advance the chain and return (S, T) snapshots taken every ``thin`` sweeps."""
    n = state.region.n_sites
    out_s = np.empty((n_samples, n), dtype=np.int8)
    out_t = np.empty((n_samples, n), dtype=np.int8)
    sites, fs, ft, ptr, nbr, K, Kp, Kpp = _sweep_args(state)
    state.sweep = _kernels.record_chain(state.s, state.t, sites, fs, ft, ptr, nbr, K, Kp, Kpp,
                                        state.key, state.sweep, n_samples, thin, out_s, out_t)
    return out_s, out_t


def sample_edges(region: Region, c, S, T, key, row0: int = 0) -> np.ndarray:
    """Edge configurations drawn by the sampling rule for each row of (S, T)."""
    c = as_couplings(c)
    if c.K < abs(c.Kpp):
        raise ValueError("sampling rule needs K >= |K''|")
    p1, p2 = edge_probabilities(c)
    S = np.atleast_2d(S)
    T = np.atleast_2d(T)
    out = np.empty((S.shape[0], region.n_edges), dtype=bool)
    _kernels.sample_edges(S, T, region.edge_u, region.edge_v, p1, p2, key, row0, out)
    return out


def sample_gat(state: ChainState, row: int | None = None) -> np.ndarray:
    """ω for the current spins; the fill off the region is 1 under a + first layer."""
    row = state.sweep if row is None else row
    return sample_edges(state.region, state.couplings, state.s, state.t,
                        stream_key(state.seed, state.chain, EDGES), row)[0]


@dataclass
class HeightSample:
    sigma_dot: np.ndarray
    sigma_circ: np.ndarray
    hp: np.ndarray
    hd: np.ndarray
    bad: np.ndarray


def sample_sigma_and_height(geom: DualGeometry, c, T, omega, key, row0: int = 0) -> HeightSample:
    """Dual colouring and integrated heights for rows of (σ•, ω); needs K = K''."""
    c = as_couplings(c)
    if geom.region.d != 2:
        raise ValueError("heights need d = 2")
    if c.K != c.Kpp:
        raise ValueError("heights need K = K'' (ice rule)")
    T = np.atleast_2d(T).astype(np.int8)
    omega = np.atleast_2d(omega)
    m = T.shape[0]
    sig = np.empty((m, geom.n_dual), dtype=np.int8)
    hp = np.zeros((m, geom.region.n_sites), dtype=np.int64)
    hd = np.zeros((m, geom.n_dual), dtype=np.int64)
    bad = np.zeros(m, dtype=bool)
    _kernels.heights_batch(T, np.ascontiguousarray(omega), geom.region.edge_u, geom.region.edge_v,
                           geom.dual_u, geom.dual_v, geom.in_star, geom.qp_ptr, geom.qp_idx,
                           geom.qd_ptr, geom.qd_idx, key, row0, sig, hp, hd, bad)
    return HeightSample(T, sig, hp, hd, bad)


# ------------------------------------------------------------ observables

@dataclass
class ObservableSeries:
    name: str
    batch_means: np.ndarray
    mean: float
    stderr: float
    n_samples: int

    @property
    def n_batches(self):
        return len(self.batch_means)


def batch_series(name, per_chain, n_batches=N_BATCHES) -> ObservableSeries:
    """Batch means over each chain's samples, pooled over chains."""
    means = []
    total = 0
    for x in per_chain:
        x = np.asarray(x, dtype=float)
        total += len(x)
        usable = len(x) - len(x) % n_batches
        if usable == 0:
            raise ValueError(f"need at least {n_batches} samples per chain")
        means.append(x[:usable].reshape(n_batches, -1).mean(axis=1))
    bm = np.concatenate(means)
    err = float(bm.std(ddof=1) / math.sqrt(len(bm))) if len(bm) > 1 else math.nan
    return ObservableSeries(name, bm, float(bm.mean()), err, total)


def variance_series(name, first, second, n_batches=N_BATCHES) -> ObservableSeries:
    """Var from per-sample estimates of E[X] and E[X²]; stderr from per-batch variances."""
    m1 = batch_series(name, first, n_batches)
    m2 = batch_series(name, second, n_batches)
    bv = m2.batch_means - m1.batch_means ** 2
    value = m2.mean - m1.mean ** 2
    err = float(bv.std(ddof=1) / math.sqrt(len(bv)))
    return ObservableSeries(name, bv, float(value), err, m1.n_samples)


def gat_view(c, bc_s: Boundary, bc_t: Boundary):
    """A change of variables under which the first layer has a + boundary and
    the couplings admit the sampling rule.

    Among the admissible views the one with the largest K + K'' (densest
    percolation) wins; earlier modes win ties.  Returns (mode, flip_first_odd,
    couplings, bc_s, bc_t) or None.
    """
    c = as_couplings(c)
    best = None
    for mode, perm in (("keep", (0, 1, 2)), ("product-second", (0, 2, 1)),
                       ("product-first-swap", (2, 0, 1))):
        try:
            if mode == "keep":
                b1, b2 = bc_s, bc_t
            elif mode == "product-second":
                b1, b2 = bc_s, boundary_product(bc_s, bc_t)
            else:
                b1, b2 = boundary_product(bc_s, bc_t), bc_s
        except ValueError:
            continue
        cc = c.permuted(perm)
        for flip in (False, True):
            bb1, c2 = b1, cc
            if flip:
                try:
                    bb1 = flip_odd_boundary(b1)
                except ValueError:
                    continue
                c2 = cc.flip_first_odd()
            if bb1.is_plus and c2.K >= abs(c2.Kpp):
                if best is None or c2.K + c2.Kpp > best[2].K + best[2].Kpp:
                    best = (mode, flip, c2, bb1, b2)
    return best


def apply_view(region: Region, view, S, T):
    mode, flip, _, _, _ = view
    if mode == "keep":
        A, B = S, T
    elif mode == "product-second":
        A, B = S, S * T
    else:
        A, B = S * T, S
    if flip:
        A = A * region.stagger
    return A.astype(np.int8), B.astype(np.int8)


def _rb_height_moments(geom: DualGeometry, hp, hd, x, b, c):
    """E[h_x | rest] and E[h_x² | rest] from the local height weights."""
    region = geom.region
    duals = geom.qp_idx[geom.qp_ptr[x]:geom.qp_ptr[x + 1]]
    edges = [int(e) for e in region.inc_edge[region.inc_ptr[x]:region.inc_ptr[x + 1]]]
    nbrs = [int(y) for y in region.inc_nbr[region.inc_ptr[x]:region.inc_ptr[x + 1]]]
    hdx = hd[:, duals]
    lo = hdx.max(axis=1) - 1
    m = hp.shape[0]
    cands = np.stack([lo, lo + 2], axis=1)
    ok = np.ones((m, 2), dtype=bool)
    for j in range(2):
        v = cands[:, j]
        ok[:, j] = (v % 2 == 0) & np.all(np.abs(hdx - v[:, None]) == 1, axis=1)
    logw = np.zeros((m, 2))
    for e, y in zip(edges, nbrs):
        p, q = geom.dual_u[e], geom.dual_v[e]
        same_dual = hd[:, p] == hd[:, q]
        for j in range(2):
            differ = cands[:, j] != hp[:, y]
            logw[:, j] += np.where(same_dual, np.where(differ, math.log(b), math.log(c)), 0.0)
    logw = np.where(ok, logw, -np.inf)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    mean = (w * cands).sum(axis=1)
    sq = (w * cands ** 2).sum(axis=1)
    return mean, sq


def _origin(region: Region):
    key = (0,) * region.d
    if key in region.index and region.interior[region.index[key]]:
        return region.index[key]
    return int(np.flatnonzero(region.interior)[0])


@dataclass
class ChainSpec:
    region: Region
    couplings: Couplings
    bc_s: Boundary
    bc_t: Boundary
    observables: tuple
    sweeps: int
    burn_in: int
    thin: int
    seed: int
    init: str
    extras: dict = field(default_factory=dict)


def _chain_worker(args):
    spec, chain = args
    region = spec.region
    c = spec.couplings
    state = initial_state(region, c, spec.bc_s, spec.bc_t, spec.seed, chain, spec.init)
    if spec.burn_in:
        glauber_sweep(state, spec.burn_in)
    n_rec = spec.sweeps // spec.thin
    origin = _origin(region)
    inside = np.flatnonzero(region.interior)
    stag = region.stagger[inside].astype(float)
    fill = int(spec.bc_s.is_plus)
    obs = {name: [] for name in spec.observables}
    need_height = any(n.startswith("height") for n in spec.observables)
    need_view = any(n in ("boundary_cluster", "hole_extent") for n in spec.observables)
    view = None
    if need_view:
        view = gat_view(c, spec.bc_s, spec.bc_t)
        if view is None:
            raise ValueError("no change of variables gives a valid graphical view")
    geom = spec.extras.get("geom")
    if need_height and geom is None:
        geom = DualGeometry(region)
    target = spec.extras.get("reach_target")
    k_edges = stream_key(spec.seed, chain, EDGES)
    k_col = stream_key(spec.seed, chain, COLOURS)
    k_view = stream_key(spec.seed, chain, VIEW)
    raw = {"S": [], "T": []} if spec.extras.get("keep_raw") else None
    row = 0
    while row < n_rec:
        m = min(BLOCK, n_rec - row)
        S, T = record(state, m, spec.thin)
        if raw is not None:
            raw["S"].append(S)
            raw["T"].append(T)
        omega = None
        if any(n in ("edge_density", "reach") or n.startswith("height") for n in spec.observables):
            omega = sample_edges(region, c, S, T, k_edges, row)
        for name in spec.observables:
            if name == "tau0":
                obs[name].append(S[:, origin].astype(float))
            elif name == "tau0_prime":
                obs[name].append(T[:, origin].astype(float))
            elif name == "magnetisation":
                obs[name].append(S[:, inside].mean(axis=1))
            elif name == "staggered":
                obs[name].append((S[:, inside] * T[:, inside]) @ stag / len(inside))
            elif name == "edge_density":
                obs[name].append(omega.mean(axis=1))
            elif name == "reach":
                _, roots = cluster_table(region, omega, fill)
                hit = (roots[:, target] == roots[:, [origin]]).any(axis=1)
                obs[name].append(hit.astype(float))
        if need_view:
            A, B = apply_view(region, view, S, T)
            w = sample_edges(region, view[2], A, B, k_view, row)
            _, roots = cluster_table(region, w, 1)
            outer = roots[:, [int(np.flatnonzero(~region.interior)[0])]]
            in_c = roots == outer
            if "boundary_cluster" in obs:
                obs["boundary_cluster"].append(in_c[:, inside].mean(axis=1))
            if "hole_extent" in obs:
                ext = np.empty(m, dtype=np.int64)
                _kernels.hole_diameters(in_c, region.interior, region.inc_ptr, region.inc_nbr,
                                        region.coords, ext)
                obs["hole_extent"].append(ext.astype(float))
        if need_height:
            hs = sample_sigma_and_height(geom, c, T, omega, k_col, row)
            if "height_bad" in obs:
                obs["height_bad"].append(hs.bad.astype(float))
            if "height0" in obs:
                obs["height0"].append(hs.hp[:, origin].astype(float))
            if "height_rb" in obs or "height_rb_sq" in obs:
                b_over_c, = (spec.extras["b_over_c"],)
                mean, sq = _rb_height_moments(geom, hs.hp, hs.hd, origin, b_over_c, 1.0)
                obs.setdefault("height_rb", []).append(mean)
                obs.setdefault("height_rb_sq", []).append(sq)
        row += m
    out = {k: np.concatenate(v) if v else np.zeros(0) for k, v in obs.items()}
    if raw is not None:
        out["_S"] = np.concatenate(raw["S"])
        out["_T"] = np.concatenate(raw["T"])
    return out


@dataclass
class ChainResult:
    series: dict
    per_chain: list
    spec: ChainSpec


def run_chains(region: Region, c, bc_s: Boundary, bc_t: Boundary, observables=("tau0",),
               chains: int = 8, sweeps: int = 100_000, burn_in: int = 10_000, thin: int = 10,
               seed: int = 0, init: str = "random", workers: int | None = None, **extras) -> ChainResult:
    """Run independent chains and pool batch means per observable."""
    spec = ChainSpec(region, as_couplings(c), bc_s, bc_t, tuple(observables), sweeps, burn_in,
                     thin, seed, init, extras)
    workers = default_workers() if workers is None else workers
    jobs = [(spec, k) for k in range(chains)]
    if workers > 1 and chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, chains)) as pool:
            per_chain = list(pool.map(_chain_worker, jobs))
    else:
        per_chain = [_chain_worker(j) for j in jobs]
    series = {}
    names = [k for k in per_chain[0] if not k.startswith("_")]
    for name in names:
        series[name] = batch_series(name, [pc[name] for pc in per_chain])
    if "height_rb" in series:
        series["height_var"] = variance_series("height_var", [pc["height_rb"] for pc in per_chain],
                                               [pc["height_rb_sq"] for pc in per_chain])
    return ChainResult(series, per_chain, spec)


def height_chain_parameters(a_over_c: float, b_over_c: float) -> tuple:
    """Couplings and boundary pair whose heights follow the six-vertex law."""
    J, U = six_vertex_params(a_over_c, b_over_c)
    return Couplings(J, U, J, roles=("J", "U", "J'")), FREE, ALT


def height_variance_mc(region: Region, a_over_c: float, b_over_c: float, **chain) -> tuple:
    c, bs, bt = height_chain_parameters(a_over_c, b_over_c)
    chain.setdefault("init", "boundary")
    res = run_chains(region, c, bs, bt, observables=("height_rb", "height_bad"),
                     b_over_c=b_over_c, **chain)
    v = res.series["height_var"]
    return v.mean, v.stderr


# ------------------------------------------------------- empirical laws

def pair_index(region: Region, bc_s: Boundary, bc_t: Boundary, S, T):
    """Row index in the pair enumeration order (first layer major)."""
    fs = np.flatnonzero(bc_s.free_mask(region))
    ft = np.flatnonzero(bc_t.free_mask(region))
    i = ((S[:, fs] < 0).astype(np.int64) << np.arange(len(fs))).sum(axis=1)
    j = ((T[:, ft] < 0).astype(np.int64) << np.arange(len(ft))).sum(axis=1)
    return i * (1 << len(ft)) + j


def sample_stream(region, c, bc_s, bc_t, n_samples, thin=1, burn_in=1000, seed=0, chain=0):
    state = initial_state(region, c, bc_s, bc_t, seed, chain)
    glauber_sweep(state, burn_in)
    return record(state, n_samples, thin)


def empirical_pair_law(region, c, bc_s, bc_t, n_samples, **kw):
    S, T = sample_stream(region, c, bc_s, bc_t, n_samples, **kw)
    idx = pair_index(region, bc_s, bc_t, S, T)
    n = (1 << int(bc_s.free_mask(region).sum())) * (1 << int(bc_t.free_mask(region).sum()))
    return np.bincount(idx, minlength=n) / len(idx)


def empirical_gat_law(region, c, bc_s, bc_t, n_samples, seed=0, **kw):
    S, T = sample_stream(region, c, bc_s, bc_t, n_samples, seed=seed, **kw)
    w = sample_edges(region, c, S, T, stream_key(seed, 0, EDGES))
    codes = (w.astype(np.int64) << np.arange(region.n_edges)).sum(axis=1)
    return np.bincount(codes, minlength=1 << region.n_edges) / len(codes)


def empirical_height_law(geom: DualGeometry, a_over_c, b_over_c, n_samples, states, seed=0, **kw):
    """Frequencies of the height functions listed in ``states`` = (hp, hd) arrays."""
    c, bs, bt = height_chain_parameters(a_over_c, b_over_c)
    region = geom.region
    S, T = sample_stream(region, c, bs, bt, n_samples, seed=seed, **kw)
    w = sample_edges(region, c, S, T, stream_key(seed, 0, EDGES))
    hs = sample_sigma_and_height(geom, c, T, w, stream_key(seed, 0, COLOURS))
    if hs.bad.any():
        raise AssertionError("sampled heights violate the height axioms")
    hp_all, hd_all = states
    index = {tuple(np.concatenate([p, d])): i for i, (p, d) in enumerate(zip(hp_all, hd_all))}
    idx = np.array([index[tuple(np.concatenate([p, d]))] for p, d in zip(hs.hp, hs.hd)])
    return np.bincount(idx, minlength=len(hp_all)) / len(idx)

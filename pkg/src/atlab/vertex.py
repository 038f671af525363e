"""Eight- and six-vertex spin laws on planar domains and the height-function
measure, all by exact enumeration."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from . import limits
from .lattice import DualGeometry, Region
from .oracle import (EnumeratedMeasure, LayerStates, _cached, _lse, edge_states, popcount,
                     region_key, xlogy)
from .spins import ALT, FREE, Boundary
from .weights import as_couplings, is_non_staggered

MAX_HEIGHT_STATES = 2_000_000


def _logs(weights):
    return [math.log(w) if w > 0 else -math.inf for w in weights]


def _circ_states(geom: DualGeometry):
    star = np.flatnonzero(geom.in_star)
    limits.require(len(star) <= limits.MAX_LAYER_SITES, "too many dual sites")
    m = 1 << len(star)
    out = np.ones((m, geom.n_dual), dtype=np.int8)
    bits = (np.arange(m)[:, None] >> np.arange(len(star))) & 1
    out[:, star] = (1 - 2 * bits).astype(np.int8)
    return out


def _codes(mask):
    mask = np.asarray(mask, dtype=np.int64)
    if mask.shape[-1] == 0:
        return np.zeros(mask.shape[:-1], dtype=np.int64)
    return (mask << np.arange(mask.shape[-1], dtype=np.int64)).sum(-1)


def eightv_law(geom: DualGeometry, weights, bc_t: Boundary = FREE) -> EnumeratedMeasure:
    """Law of (σ•, σ∘); state index i * n_circ + j."""
    a, b, c, d = weights
    if min(a, b, c, d) < 0 or c <= 0:
        raise ValueError("need nonnegative weights and c > 0")
    region = geom.region
    dots = LayerStates(region, bc_t)
    circs = _circ_states(geom)
    Ddot = dots.masks
    Dcirc = _codes(geom.disagreement(circs))
    la, lb, lc, ld = _logs((a, b, c, d))
    E = region.n_edges
    inter = np.bitwise_count(Ddot[:, None] & Dcirc[None, :]).astype(np.int64)
    nd = popcount(Ddot)[:, None]
    nc = popcount(Dcirc)[None, :]
    logw = (xlogy(nc - inter, la) + xlogy(nd - inter, lb) + xlogy(E - nd - nc + inter, lc)
            + xlogy(inter, ld))
    return EnumeratedMeasure("vertex", np.arange(logw.size, dtype=np.int64), logw.ravel(),
                             {"sigma_dot": dots.spins, "sigma_circ": circs, "shape": logw.shape})


def coupling_pushforward(geom: DualGeometry, c, bc_t: Boundary = FREE) -> EnumeratedMeasure:
    """Law of (σ•, σ∘) produced from the graphical coupling with a free first layer.

    σ• is the second spin layer; σ∘ is +1 on the dual cluster touching the
    outside and uniform on the others, so given ω it is uniform over the
    colourings whose disagreement edges lie inside ω.
    """
    c = as_couplings(c)
    if c.K < abs(c.Kpp):
        raise ValueError("coupling needs K >= |K''|")
    region = geom.region
    dots = LayerStates(region, bc_t)
    circs = _circ_states(geom)
    uniq, inverse, logG = _pushforward_table(geom, bc_t)
    E = region.n_edges
    lu1 = math.log(math.expm1(2 * (c.K - c.Kpp))) if c.K > c.Kpp else -math.inf
    lw1 = math.log(math.expm1(2 * (c.K + c.Kpp))) if c.K + c.Kpp > 0 else -math.inf
    n, i = np.meshgrid(np.arange(E + 1), np.arange(E + 1), indexing="ij")
    with np.errstate(invalid="ignore"):
        weight = np.where(i <= n, xlogy(i, lu1) + xlogy(np.maximum(n - i, 0), lw1), -np.inf)
    per = _lse((logG + weight[None, None]).reshape(logG.shape[0], logG.shape[1], -1), axis=2)
    per = per + 2 * (c.Kpp - c.Kp) * popcount(uniq)[:, None]
    out = per[inverse]
    return EnumeratedMeasure("vertex", np.arange(out.size, dtype=np.int64), out.ravel(),
                             {"sigma_dot": dots.spins, "sigma_circ": circs, "shape": out.shape})


def _pushforward_table(geom: DualGeometry, bc_t: Boundary):
    """Coupling-independent part of :func:`coupling_pushforward`.

    For each distinct second-layer disagreement set D' and dual colouring j,
    logG[D', j, n, i] = log sum of A(ω)/N(ω) over ω containing the dual
    disagreement set of j with |ω| = n and |ω ∩ D'| = i.
    """
    region = geom.region

    def build():
        codes = edge_states(region)
        E1 = region.n_edges + 1
        Ds, ms = LayerStates(region, FREE).unique_masks()
        uniq, inverse = np.unique(LayerStates(region, bc_t).masks, return_inverse=True)
        Dcirc = _codes(geom.disagreement(_circ_states(geom)))
        # A(ω): first-layer configurations with no disagreement edge open
        mult = np.exp(ms)
        A = np.array([mult[(w & Ds) == 0].sum() for w in codes])
        # N(ω): admissible dual colourings, counted directly
        cover = (Dcirc[None, :] & ~codes[:, None]) == 0
        base = A / cover.sum(axis=1)
        n_open = popcount(codes)
        G = np.zeros((len(uniq), len(Dcirc), E1 * E1))
        for a, dt in enumerate(uniq):
            inter = np.bitwise_count(dt & codes).astype(np.int64)
            slot = n_open * E1 + inter
            for j in range(len(Dcirc)):
                G[a, j] = np.bincount(slot, weights=base * cover[:, j], minlength=E1 * E1)
        with np.errstate(divide="ignore"):
            logG = np.log(G).reshape(len(uniq), len(Dcirc), E1, E1)
        return uniq, inverse.ravel(), logG

    return _cached(("pushforward", region_key(region), bc_t), build, region.n_edges)


def ice_rule(geom: DualGeometry, sigma_dot, sigma_circ) -> bool:
    region = geom.region
    dd = sigma_dot[region.edge_u] != sigma_dot[region.edge_v]
    dc = geom.disagreement(sigma_circ)
    return not np.any(dd & dc)


# ---------------------------------------------------------------- heights

def height_boundary(geom: DualGeometry, shift: int = 0):
    """Pinned values: 0 on even and 2 on odd primal vertices, 1 on dual ones."""
    region = geom.region
    return (2 * region.parity + shift).astype(np.int64), np.full(geom.n_dual, 1 + shift, dtype=np.int64)


def heights_from_spins(geom: DualGeometry, sigma_dot, sigma_circ, shift: int = 0):
    """Integrate h_{p} - h_{x} = σ•_x σ∘_p from the pinned dual vertices.

    Raises ValueError when the increments do not close up.
    """
    region = geom.region
    npr, nd = region.n_sites, geom.n_dual
    hp = np.zeros(npr, dtype=np.int64)
    hd = np.zeros(nd, dtype=np.int64)
    known_p = np.zeros(npr, dtype=bool)
    known_d = ~geom.in_star
    hd[known_d] = 1 + shift
    queue = deque(("d", int(p)) for p in np.flatnonzero(known_d))
    while queue:
        kind, i = queue.popleft()
        if kind == "d":
            for q in range(geom.qd_ptr[i], geom.qd_ptr[i + 1]):
                x = int(geom.qd_idx[q])
                val = hd[i] - sigma_dot[x] * sigma_circ[i]
                if not known_p[x]:
                    hp[x], known_p[x] = val, True
                    queue.append(("p", x))
                elif hp[x] != val:
                    raise ValueError("increments do not close")
        else:
            for q in range(geom.qp_ptr[i], geom.qp_ptr[i + 1]):
                p = int(geom.qp_idx[q])
                val = hp[i] + sigma_dot[i] * sigma_circ[p]
                if not known_d[p]:
                    hd[p], known_d[p] = val, True
                    queue.append(("d", p))
                elif hd[p] != val:
                    raise ValueError("increments do not close")
    if not (known_p.all() and known_d.all()):
        raise ValueError("some vertex is not reached from the pinned set")
    return hp, hd


def is_height_function(geom: DualGeometry, hp, hd) -> bool:
    if np.any(hp % 2 != 0):
        return False
    pairs = geom.quad_pairs()
    return bool(np.all(np.abs(hp[pairs[:, 0]] - hd[pairs[:, 1]]) == 1))


def enumerate_heights(geom: DualGeometry, shift: int = 0) -> tuple:
    """All admissible height functions with the pinned boundary.

    Free values are the interior primal vertices and the dual star set; a
    depth-first search assigns them in index order, checking every quad whose
    two ends are already set.
    """
    region = geom.region
    bp, bd = height_boundary(geom, shift)
    free_p = np.flatnonzero(region.interior)
    free_d = np.flatnonzero(geom.in_star)
    limits.require(len(free_p) + len(free_d) <= 16, "height enumeration is capped at 16 free vertices")
    hp = bp.copy()
    hd = bd.copy()
    set_p = ~region.interior.copy()
    set_d = ~geom.in_star.copy()
    out_p, out_d = [], []

    def neighbours(kind, i):
        if kind == "d":
            return [("p", int(geom.qd_idx[q])) for q in range(geom.qd_ptr[i], geom.qd_ptr[i + 1])]
        return [("d", int(geom.qp_idx[q])) for q in range(geom.qp_ptr[i], geom.qp_ptr[i + 1])]

    # breadth-first from the pinned vertices so each free one has a set neighbour
    seen = {("p", int(x)) for x in np.flatnonzero(set_p)} | {("d", int(p)) for p in np.flatnonzero(set_d)}
    queue = deque(sorted(seen))
    order = []
    while queue:
        key = queue.popleft()
        for nb in neighbours(*key):
            if nb not in seen:
                seen.add(nb)
                order.append(nb)
                queue.append(nb)
    if len(order) != len(free_p) + len(free_d):
        raise ValueError("some free height is not connected to the pinned set")
    nbrs = {key: neighbours(*key) for key in order}

    def candidates(kind, i):
        known = [hp[j] if k == "p" else hd[j] for k, j in nbrs[(kind, i)]
                 if (set_p[j] if k == "p" else set_d[j])]
        if not known:
            raise ValueError("search order leaves a vertex without a set neighbour")
        lo, hi = max(known) - 1, min(known) + 1
        want = 0 if kind == "p" else 1
        return [v for v in range(lo, hi + 1) if v % 2 == want and all(abs(v - k) == 1 for k in known)]

    def dfs(pos):
        if pos == len(order):
            out_p.append(hp.copy())
            out_d.append(hd.copy())
            limits.require(len(out_p) <= MAX_HEIGHT_STATES, "too many height functions")
            return
        kind, i = order[pos]
        for v in candidates(kind, i):
            if kind == "p":
                hp[i], set_p[i] = v, True
            else:
                hd[i], set_d[i] = v, True
            dfs(pos + 1)
        if kind == "p":
            set_p[i] = False
        else:
            set_d[i] = False

    dfs(0)
    return np.array(out_p), np.array(out_d)


def height_disagreements(geom: DualGeometry, hp, hd):
    """(E_{h•}, E_{h∘}) as boolean arrays over the primal edges."""
    region = geom.region
    dot = hp[..., region.edge_u] != hp[..., region.edge_v]
    circ = hd[..., geom.dual_u] != hd[..., geom.dual_v]
    return dot, circ


def hf_law(geom_or_region, a: float, b: float, c: float, shift: int = 0) -> EnumeratedMeasure:
    """Height-function law a^{|E_h∘|} b^{|E_h•|} c^{|E minus both|}."""
    geom = geom_or_region if isinstance(geom_or_region, DualGeometry) else DualGeometry(geom_or_region)
    if min(a, b, c) <= 0:
        raise ValueError("height weights must be positive")
    hp, hd = enumerate_heights(geom, shift)
    dot, circ = height_disagreements(geom, hp, hd)
    if np.any(dot & circ):
        raise AssertionError("height function with overlapping disagreement edges")
    E = geom.region.n_edges
    n_dot, n_circ = dot.sum(1), circ.sum(1)
    logw = n_circ * math.log(a) + n_dot * math.log(b) + (E - n_dot - n_circ) * math.log(c)
    return EnumeratedMeasure("heights", np.arange(len(hp), dtype=np.int64), logw,
                             {"hp": hp, "hd": hd, "geom": geom, "shift": shift})


def heights_pushforward(geom: DualGeometry, law: EnumeratedMeasure) -> EnumeratedMeasure:
    """Map a six-vertex spin law through the gradient construction onto the
    state list of :func:`hf_law`."""
    target = hf_law(geom, 1.0, 1.0, 1.0)
    index = {tuple(np.concatenate([p, d])): i for i, (p, d) in enumerate(zip(target.meta["hp"], target.meta["hd"]))}
    dots, circs = law.meta["sigma_dot"], law.meta["sigma_circ"]
    n_circ = len(circs)
    logw = np.full(len(target.states), -np.inf)
    for k, lw in enumerate(law.logw):
        if not np.isfinite(lw):
            continue
        hp, hd = heights_from_spins(geom, dots[k // n_circ], circs[k % n_circ])
        j = index[tuple(np.concatenate([hp, hd]))]
        logw[j] = np.logaddexp(logw[j], lw)
    return EnumeratedMeasure("heights", target.states, logw, target.meta)


def height_variance_exact(region: Region, a, b, c, site=None) -> float:
    law = hf_law(region, a, b, c)
    x = region.index[(0,) * region.d] if site is None else site
    h = law.meta["hp"][:, x].astype(float)
    m = law.expect(h)
    return law.expect((h - m) ** 2)


def height_variance(n: int, a: float, b: float, c: float, backend: str = "oracle", **chain) -> tuple:
    """(Var(h_0), stderr) on the box of radius n."""
    from .lattice import BoxRegion

    region = BoxRegion(2, n)
    if backend == "oracle":
        return height_variance_exact(region, a, b, c), 0.0
    from . import samplers

    return samplers.height_variance_mc(region, a / c, b / c, **chain)


def non_staggered(weights) -> bool:
    """a = b: the unstaggered case, which sits on the self-dual line."""
    return is_non_staggered(weights[0], weights[1])


__all__ = ["eightv_law", "coupling_pushforward", "hf_law", "heights_pushforward", "heights_from_spins",
           "enumerate_heights", "height_variance", "ice_rule", "is_height_function", "non_staggered",
           "ALT"]

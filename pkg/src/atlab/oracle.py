"""Exact enumeration of the spin, percolation and coupled-pair laws on tiny
regions, together with the identity and inequality checks built on them.

All weights are accumulated in log space.  Edge configurations are int64 bit
codes in the canonical edge order of the region (bit e is edge e).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import limits
from .lattice import Region, cluster_table, codes_to_bits
from .spins import FREE, PLUS, Boundary, SpinPair, boundary_product, disagreement_edges
from .weights import (Couplings, DegenerateBranch, as_couplings, atrc_weights,
                      edge_probabilities, gat_weights, log_gat_weights)

LOG2 = math.log(2.0)
_CHUNK = 1 << 22


def popcount(x):
    return np.bitwise_count(np.asarray(x, dtype=np.int64)).astype(np.int64)


def xlogy(count, logw):
    """count * logw with the convention 0 * log 0 = 0."""
    count = np.asarray(count)
    with np.errstate(invalid="ignore"):
        return np.where(count == 0, 0.0, count * logw)


def _lse(a, axis=None):
    with np.errstate(divide="ignore", invalid="ignore"):
        return logsumexp(a, axis=axis)


def _bits_to_codes(bits):
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] == 0:
        return np.zeros(bits.shape[:-1], dtype=np.int64)
    return (bits << np.arange(bits.shape[-1], dtype=np.int64)).sum(axis=-1)


@dataclass
class EnumeratedMeasure:
    """A finite measure given by log-weights over an explicit list of states."""

    kind: str
    states: np.ndarray
    logw: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def logZ(self) -> float:
        return float(_lse(self.logw))

    @property
    def probs(self) -> np.ndarray:
        z = self.logZ
        if not np.isfinite(z):
            raise ValueError("measure has no positive weight")
        with np.errstate(under="ignore"):
            p = np.exp(self.logw - z)
        return p / p.sum()

    def expect(self, values) -> float:
        return float(np.dot(self.probs, values))

    def __len__(self):
        return len(self.states)


def tv_distance(mu: EnumeratedMeasure, nu: EnumeratedMeasure) -> float:
    if mu.kind != nu.kind or not np.array_equal(mu.states, nu.states):
        raise ValueError("measures live on different state lists")
    return 0.5 * float(np.abs(mu.probs - nu.probs).sum())


def tv_arrays(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


class LayerStates:
    """All configurations of one layer compatible with its boundary condition.

    State j sets free site free[i] to -1 when bit i of j is set.
    """

    def __init__(self, region: Region, bc: Boundary, sites=None):
        mask = bc.free_mask(region) if sites is None else sites
        self.free = np.flatnonzero(mask)
        limits.require(len(self.free) <= limits.MAX_LAYER_SITES,
                       f"{len(self.free)} free sites exceed the cap of {limits.MAX_LAYER_SITES}")
        base = bc.values_on(region)
        m = 1 << len(self.free)
        bits = (np.arange(m, dtype=np.int64)[:, None] >> np.arange(len(self.free))) & 1
        spins = np.repeat(base[None, :], m, axis=0)
        spins[:, self.free] = (1 - 2 * bits).astype(np.int8)
        self.spins = spins
        self.region = region
        self.bc = bc
        self.masks = _bits_to_codes(disagreement_edges(spins, region))

    def __len__(self):
        return len(self.spins)

    def unique_masks(self):
        d, cnt = np.unique(self.masks, return_counts=True)
        return d, np.log(cnt.astype(float))


# ---------------------------------------------------------------- AT weights

def log_at_weight(pair: SpinPair, c) -> float:
    c = as_couplings(c)
    r = pair.region
    ss = pair.s[r.edge_u].astype(float) * pair.s[r.edge_v]
    tt = pair.t[r.edge_u].astype(float) * pair.t[r.edge_v]
    return float(c.K * ss.sum() + c.Kp * tt.sum() + c.Kpp * (ss * tt).sum())


def at_weight(pair: SpinPair, c) -> float:
    return math.exp(log_at_weight(pair, c))


def log_at_weight_disagreement(pair: SpinPair, c) -> float:
    """Log of the disagreement-edge form; differs from the AT log-weight by a
    configuration-independent constant."""
    c = as_couplings(c)
    ds = disagreement_edges(pair.s, pair.region)
    dt = disagreement_edges(pair.t, pair.region)
    return float(-2 * (c.K + c.Kpp) * ds.sum() - 2 * (c.Kp + c.Kpp) * dt.sum()
                 + 4 * c.Kpp * (ds & dt).sum())


def log_joint_weight(pair: SpinPair, omega, c) -> float:
    """Log-weight of (s, s', ω) in the graphical coupling (-inf off support)."""
    c = as_couplings(c)
    if c.K < abs(c.Kpp):
        raise ValueError("graphical coupling needs K >= |K''|")
    if pair.bc_s.kind not in ("plus", "free"):
        raise ValueError("first layer boundary must be + or free")
    if int(omega.fill) != int(pair.bc_s.is_plus):
        raise ValueError("edge fill must be 1 exactly for the + boundary")
    w = np.asarray(omega.open, dtype=bool)
    ds = disagreement_edges(pair.s, pair.region)
    dt = disagreement_edges(pair.t, pair.region)
    if np.any(w & ds):
        return -math.inf
    lu1 = math.log(math.expm1(2 * (c.K - c.Kpp))) if c.K > c.Kpp else -math.inf
    lw1 = math.log(math.expm1(2 * (c.K + c.Kpp))) if c.K + c.Kpp > 0 else -math.inf
    return float(2 * (c.Kpp - c.Kp) * dt.sum() + xlogy((w & dt).sum(), lu1)
                 + xlogy((w & ~dt).sum(), lw1))


def joint_weight(pair: SpinPair, omega, c) -> float:
    return math.exp(log_joint_weight(pair, omega, c))


def at_law(region: Region, c, bc_s: Boundary, bc_t: Boundary) -> EnumeratedMeasure:
    """Full pair enumeration; state index i * len(T) + j."""
    c = as_couplings(c)
    ls, lt = LayerStates(region, bc_s), LayerStates(region, bc_t)
    limits.require(len(ls) * len(lt) <= limits.MAX_PAIR_STATES, "pair state space exceeds the cap")
    fs = (ls.spins[:, region.edge_u] * ls.spins[:, region.edge_v]).astype(float)
    ft = (lt.spins[:, region.edge_u] * lt.spins[:, region.edge_v]).astype(float)
    logw = (c.K * fs.sum(1))[:, None] + (c.Kp * ft.sum(1))[None, :] + c.Kpp * (fs @ ft.T)
    return EnumeratedMeasure("pairs", np.arange(logw.size, dtype=np.int64), logw.ravel(),
                             {"S": ls.spins, "T": lt.spins, "shape": logw.shape})


# ------------------------------------------------------- pair enumeration

class PairEnumeration:
    """Exact AT law with degree-one boundary sites summed out analytically.

    A boundary site with a single edge to the region and a free spin in some
    layer contributes a factor depending only on the two spins at its
    neighbour; that factor is folded into the core weights, so only the core
    sites are enumerated.
    """

    def __init__(self, region: Region, c, bc_s: Boundary, bc_t: Boundary, eliminate_leaves=True):
        c = as_couplings(c)
        self.region, self.c, self.bc_s, self.bc_t = region, c, bc_s, bc_t
        free_s, free_t = bc_s.free_mask(region), bc_t.free_mask(region)
        vals_s, vals_t = bc_s.values_on(region), bc_t.values_on(region)
        leaf = np.zeros(region.n_sites, dtype=bool)
        if eliminate_leaves:
            leaf = (~region.interior) & (region.degree == 1) & (free_s | free_t)
        self.leaf = leaf
        ls = LayerStates(region, bc_s, sites=free_s & ~leaf)
        lt = LayerStates(region, bc_t, sites=free_t & ~leaf)
        limits.require(len(ls) * len(lt) <= limits.MAX_PAIR_STATES, "pair state space exceeds the cap")
        self.S, self.T = ls.spins, lt.spins
        eu, ev = region.edge_u, region.edge_v
        direct = ~(leaf[eu] | leaf[ev])
        self.direct = direct
        fs = (self.S[:, eu[direct]] * self.S[:, ev[direct]]).astype(float)
        ft = (self.T[:, eu[direct]] * self.T[:, ev[direct]]).astype(float)
        a_s = c.K * fs.sum(1)
        a_t = c.Kp * ft.sum(1)
        cols_s, cols_t, coef = [fs], [ft], [np.full(fs.shape[1], c.Kpp)]
        self.leaf_info = {}
        for e in np.flatnonzero(~direct):
            lf, x = (eu[e], ev[e]) if leaf[eu[e]] else (ev[e], eu[e])
            A = (1, -1) if free_s[lf] else (int(vals_s[lf]),)
            B = (1, -1) if free_t[lf] else (int(vals_t[lf]),)
            table = np.empty((2, 2, len(A), len(B)))
            for i, sx in enumerate((1, -1)):
                for j, tx in enumerate((1, -1)):
                    for p, a in enumerate(A):
                        for q, b in enumerate(B):
                            table[i, j, p, q] = c.K * sx * a + c.Kp * tx * b + c.Kpp * sx * tx * a * b
            logL = _lse(table.reshape(2, 2, -1), axis=2)
            sg = np.array([1.0, -1.0])
            # the constant part of logL cancels in the normalisation
            beta = (logL * sg[:, None]).mean()
            gamma = (logL * sg[None, :]).mean()
            delta = (logL * np.outer(sg, sg)).mean()
            a_s = a_s + beta * self.S[:, x]
            a_t = a_t + gamma * self.T[:, x]
            cols_s.append(self.S[:, [x]].astype(float))
            cols_t.append(self.T[:, [x]].astype(float))
            coef.append(np.array([delta]))
            cond = np.exp(table - logL[:, :, None, None])
            self.leaf_info[int(e)] = (int(lf), int(x), A, B, cond)
        Fs = np.concatenate(cols_s, axis=1)
        Ft = np.concatenate(cols_t, axis=1)
        logW = a_s[:, None] + a_t[None, :] + (Fs * np.concatenate(coef)) @ Ft.T
        top = logW.max()
        P = np.exp(logW - top)
        Z = P.sum()
        self.P = P / Z
        self.logZ_core = float(top + math.log(Z))

    # helpers ---------------------------------------------------------
    def _pair_sum(self, row_vec, col_vec) -> float:
        return float(row_vec @ self.P @ col_vec)

    def _site_table(self, x, table) -> float:
        """E[table[σ_x index, σ'_x index]] with index 0 for +1."""
        ms = [(self.S[:, x] == v).astype(float) for v in (1, -1)]
        mt = [(self.T[:, x] == v).astype(float) for v in (1, -1)]
        return sum(table[i, j] * self._pair_sum(ms[i], mt[j]) for i in range(2) for j in range(2))

    def _check_core(self, x):
        if self.leaf[x]:
            raise ValueError("site was summed out; query its neighbour instead")

    # observables -----------------------------------------------------
    def marginal_s(self):
        return self.P.sum(axis=1)

    def marginal_t(self):
        return self.P.sum(axis=0)

    def magnetisation(self, x: int, layer: int = 0) -> float:
        self._check_core(x)
        if layer == 0:
            return float(self.marginal_s() @ self.S[:, x])
        return float(self.marginal_t() @ self.T[:, x])

    def correlation(self, x: int, y: int, layer: int = 0) -> float:
        self._check_core(x)
        self._check_core(y)
        if layer == 0:
            return float(self.marginal_s() @ (self.S[:, x] * self.S[:, y]))
        return float(self.marginal_t() @ (self.T[:, x] * self.T[:, y]))

    def moment(self, sites) -> float:
        """E[prod_{x in sites} s_x] on the first layer."""
        prod = np.ones(len(self.S))
        for x in sites:
            self._check_core(x)
            prod = prod * self.S[:, x]
        return float(self.marginal_s() @ prod)

    def product_moment(self, x: int) -> float:
        """E[s_x s'_x]."""
        self._check_core(x)
        return self._pair_sum(self.S[:, x].astype(float), self.T[:, x].astype(float))

    def staggered_order(self) -> float:
        r = self.region
        xs = np.flatnonzero(r.interior)
        return float(np.mean([r.stagger[x] * self.product_moment(x) for x in xs]))

    def _edge_agree(self, e):
        r = self.region
        u, v = r.edge_u[e], r.edge_v[e]
        return ((self.S[:, u] == self.S[:, v]).astype(float),
                (self.T[:, u] == self.T[:, v]).astype(float))

    def edge_open_probabilities(self) -> np.ndarray:
        """E[P(ω_e = 1 | s, s')] for every edge under the sampling rule."""
        c = self.c
        if c.K < abs(c.Kpp):
            raise ValueError("sampling rule needs K >= |K''|")
        p1, p2 = edge_probabilities(c)
        out = np.empty(self.region.n_edges)
        for e in range(self.region.n_edges):
            if self.direct[e]:
                a_s, a_t = self._edge_agree(e)
                out[e] = self._pair_sum(a_s, p2 * a_t + p1 * (1 - a_t))
            else:
                lf, x, A, B, cond = self.leaf_info[e]
                table = np.zeros((2, 2))
                for i, sx in enumerate((1, -1)):
                    for j, tx in enumerate((1, -1)):
                        for p, a in enumerate(A):
                            for q, b in enumerate(B):
                                if a == sx:
                                    table[i, j] += cond[i, j, p, q] * (p2 if b == tx else p1)
                out[e] = self._site_table(x, table)
        return out

    def prob_all_closed(self, edges) -> float:
        """P(every edge in ``edges`` is closed) in the sampled ω."""
        c = self.c
        p1, p2 = edge_probabilities(c)
        acc = np.ones_like(self.P)
        for e in edges:
            if not self.direct[e]:
                raise ValueError("edge touches a summed-out site")
            a_s, a_t = self._edge_agree(e)
            acc *= 1.0 - np.outer(a_s, p2 * a_t + p1 * (1 - a_t))
        return float((acc * self.P).sum())


# ----------------------------------------------------------- graphical law

_HIST_CACHE: dict = {}
_HIST_CACHE_SIZE = 16
_CACHE_MAX_EDGES = 13


def region_key(region: Region):
    return region.d, tuple(map(tuple, region.coords[region.interior]))


def _cached(key, build, n_edges):
    if n_edges > _CACHE_MAX_EDGES:
        return build()
    if key not in _HIST_CACHE:
        if len(_HIST_CACHE) >= _HIST_CACHE_SIZE:
            _HIST_CACHE.pop(next(iter(_HIST_CACHE)))
        _HIST_CACHE[key] = build()
    return _HIST_CACHE[key]


def layer_histogram(region: Region, bc: Boundary):
    """H[ω, p, i]: number of layer states whose disagreement set D has
    |D| = p and |D ∩ ω| = i, for every edge configuration ω.

    Independent of the couplings, so it is built once per (region, boundary).
    """
    def build():
        codes = edge_states(region)
        E1 = region.n_edges + 1
        D, logmult = LayerStates(region, bc).unique_masks()
        mult = np.exp(logmult)
        popD = popcount(D)
        H = np.zeros((len(codes), E1 * E1))
        step = max(1, _CHUNK // max(1, len(D)))
        for a in range(0, len(codes), step):
            rows = codes[a:a + step]
            m = len(rows)
            inter = np.bitwise_count(rows[:, None] & D[None, :]).astype(np.int64)
            idx = (np.arange(m)[:, None] * (E1 * E1) + popD[None, :] * E1 + inter).ravel()
            w = np.broadcast_to(mult, (m, len(D))).ravel()
            H[a:a + step] = np.bincount(idx, weights=w, minlength=m * E1 * E1).reshape(m, E1 * E1)
        return H.reshape(len(codes), E1, E1)

    return _cached(("layer", region_key(region), bc), build, region.n_edges)


def _count_grid(E):
    p, i = np.meshgrid(np.arange(E + 1), np.arange(E + 1), indexing="ij")
    return p, i


def _log_hist(H):
    with np.errstate(divide="ignore"):
        return np.log(H)


def _log_layer_sum(H, lw2, lw3):
    """log sum_D w2^{|D minus ω|} w3^{|D ∩ ω|} for every ω."""
    E = H.shape[1] - 1
    p, i = _count_grid(E)
    with np.errstate(invalid="ignore"):
        logT = np.where(i <= p, xlogy(p - i, lw2) + xlogy(i, lw3), -np.inf)
    return _lse(_log_hist(H).reshape(len(H), -1) + logT.ravel()[None, :], axis=1)


def _log_layer_sum_degenerate(H, n_open, rate):
    """Layer sum when w2 vanishes: only D covering ω count, each with e^{-rate |D|}."""
    E = H.shape[1] - 1
    cover = _log_hist(H[np.arange(len(H)), :, n_open])
    return _lse(cover - rate * np.arange(E + 1)[None, :], axis=1)


def edge_states(region: Region):
    E = region.n_edges
    limits.require(E <= limits.MAX_GAT_EDGES, f"{E} edges exceed the cap of {limits.MAX_GAT_EDGES}")
    return np.arange(1 << E, dtype=np.int64)


def gat_law(region: Region, c, fill: int, bc_t: Boundary = FREE) -> EnumeratedMeasure:
    """Law of ω from its closed form (cluster factor and layer sum)."""
    c = as_couplings(c)
    if c.K < abs(c.Kpp):
        raise ValueError("graphical law needs K >= |K''|")
    meta = {"fill": int(fill), "edges": tuple(region.edge_index), "couplings": c, "bc_t": bc_t}
    if region.n_edges == 0:
        return EnumeratedMeasure("edges", np.zeros(1, dtype=np.int64), np.zeros(1), meta)
    codes = edge_states(region)
    bits = codes_to_bits(codes, region.n_edges)
    n_open = popcount(codes)
    k, _ = cluster_table(region, bits, fill)
    H = layer_histogram(region, bc_t)
    try:
        lw1, lw2, lw3 = log_gat_weights(c)
        log_s = _log_layer_sum(H, lw2, lw3)
    except DegenerateBranch:
        lw1 = math.log(math.expm1(4 * c.K)) if c.K > 0 else -math.inf
        log_s = _log_layer_sum_degenerate(H, n_open, 2 * (c.K + c.Kp))
    logw = xlogy(n_open, lw1) + k * LOG2 + log_s
    meta.update(n_open=n_open, k=k, log_s=log_s, lw1=lw1)
    return EnumeratedMeasure("edges", codes, logw, meta)


def gat_law_from_joint(region: Region, c, fill: int, bc_t: Boundary = FREE) -> EnumeratedMeasure:
    """ω-marginal of the joint (s, s', ω) weight, summed layer by layer.

    The joint weight factorises into an indicator depending on (s, ω) and a
    factor depending on (s', ω); each is summed over its own layer.
    """
    c = as_couplings(c)
    if c.K < abs(c.Kpp):
        raise ValueError("graphical law needs K >= |K''|")
    meta = {"fill": int(fill), "edges": tuple(region.edge_index), "couplings": c, "bc_t": bc_t}
    if region.n_edges == 0:
        return EnumeratedMeasure("edges", np.zeros(1, dtype=np.int64), np.zeros(1), meta)
    codes = edge_states(region)
    bc_s = PLUS if fill else FREE
    E = region.n_edges
    lu1 = math.log(math.expm1(2 * (c.K - c.Kpp))) if c.K > c.Kpp else -math.inf
    lw1 = math.log(math.expm1(2 * (c.K + c.Kpp))) if c.K + c.Kpp > 0 else -math.inf
    n_open = popcount(codes)
    # s-layer: count the s with no disagreement on an open edge
    logA = _log_hist(layer_histogram(region, bc_s)[:, :, 0].sum(axis=1))
    p, i = _count_grid(E)
    logHt = _log_hist(layer_histogram(region, bc_t))
    with np.errstate(invalid="ignore"):
        base = np.where(i <= p, 2 * (c.Kpp - c.Kp) * p + xlogy(i, lu1), -np.inf)
    rest = n_open[:, None, None] - i[None]
    with np.errstate(invalid="ignore"):
        closed = np.where(rest >= 0, xlogy(np.maximum(rest, 0), lw1), -np.inf)
    logB = _lse((logHt + base[None] + closed).reshape(len(codes), -1), axis=1)
    return EnumeratedMeasure("edges", codes, logA + logB, meta)


def cluster_roots(region: Region, measure: EnumeratedMeasure):
    bits = codes_to_bits(measure.states, region.n_edges)
    return cluster_table(region, bits, measure.meta["fill"])


def connection_probability(region: Region, measure: EnumeratedMeasure, x: int, y: int) -> float:
    _, roots = cluster_roots(region, measure)
    return measure.expect((roots[:, x] == roots[:, y]).astype(float))


def outside_probability(region: Region, measure: EnumeratedMeasure, x: int) -> float:
    """P(x is joined to a site off the region)."""
    _, roots = cluster_roots(region, measure)
    bnd = np.flatnonzero(~region.interior)
    hit = (roots[:, bnd] == roots[:, [x]]).any(axis=1)
    return measure.expect(hit.astype(float))


# ------------------------------------------------------------ the checks

def correlation_equals_connection(region: Region, c, bc_s: Boundary, bc_t: Boundary, pairs=None):
    """Largest gap between spin correlations and connection probabilities.

    Returns a list of (kind, x, y, spin value, connection value, gap).
    """
    c = as_couplings(c)
    if bc_s.kind not in ("plus", "free"):
        raise ValueError("first layer boundary must be + or free")
    fill = int(bc_s.is_plus)
    spins = PairEnumeration(region, c, bc_s, bc_t)
    gat = gat_law(region, c, fill, bc_t)
    _, roots = cluster_roots(region, gat)
    inside = np.flatnonzero(region.interior)
    if pairs is None:
        pairs = [(x, y) for i, x in enumerate(inside) for y in inside[i + 1:]]
    rows = []
    for x, y in pairs:
        lhs = spins.correlation(x, y)
        rhs = gat.expect((roots[:, x] == roots[:, y]).astype(float))
        rows.append(("pair", int(x), int(y), lhs, rhs, abs(lhs - rhs)))
    if fill:
        bnd = np.flatnonzero(~region.interior)
        for x in inside:
            lhs = spins.magnetisation(x)
            rhs = gat.expect((roots[:, bnd] == roots[:, [x]]).any(axis=1).astype(float))
            rows.append(("site", int(x), -1, lhs, rhs, abs(lhs - rhs)))
    return rows


def finite_energy_bounds(c) -> tuple:
    w1, w2, w3 = gat_weights(c)
    lower = 0.0 if w3 == 0 else 1.0 / (1.0 + 2.0 * max(1.0, w2) / (min(1.0, w3) * w1))
    upper = 1.0 / (1.0 + min(1.0, w2) / (max(1.0, w3) * w1))
    return lower, upper


def single_edge_conditionals(measure: EnumeratedMeasure, n_edges: int):
    """P(ω_e = 1 | rest) for every edge and every context of positive weight.

    Returns (edge index, context code, probability) arrays.
    """
    lw = measure.logw
    codes = measure.states
    E, C, Pr = [], [], []
    for e in range(n_edges):
        closed = codes[(codes >> e) & 1 == 0]
        a, b = lw[closed], lw[closed | (1 << e)]
        ok = np.isfinite(a) | np.isfinite(b)
        with np.errstate(invalid="ignore", over="ignore"):
            p = 1.0 / (1.0 + np.exp(a[ok] - b[ok]))
        E.append(np.full(ok.sum(), e))
        C.append(closed[ok])
        Pr.append(p)
    return np.concatenate(E), np.concatenate(C), np.concatenate(Pr)


def finite_energy_check(region: Region, c, fill: int = 0, bc_t: Boundary = FREE) -> dict:
    c = as_couplings(c)
    if c.K + c.Kpp <= 0:
        raise ValueError("finite-energy bounds need K + K'' > 0")
    lower, upper = finite_energy_bounds(c)
    mu = gat_law(region, c, fill, bc_t)
    edges, ctx, p = single_edge_conditionals(mu, region.n_edges)
    slack = np.minimum(p - lower, upper - p)
    i = int(np.argmin(slack))
    return {"min_slack": float(slack[i]), "edge": int(edges[i]), "context": int(ctx[i]),
            "lower": lower, "upper": upper, "n_checked": int(len(p))}


def fkg_lattice_check(region: Region, c, fill: int, bc_t: Boundary = FREE, tol=1e-13) -> dict:
    """Two-edge lattice condition in log form.

    The margin log μ(ω∪ef) + log μ(ω) - log μ(ω∪e) - log μ(ω∪f) is assembled
    from the cluster and layer-sum parts separately so the edge factor, which
    cancels exactly, never enters.
    """
    c = as_couplings(c)
    if not (c.K >= c.Kpp and c.K > -c.Kpp):
        raise ValueError("lattice check needs K >= K'' and K > -K''")
    mu = gat_law(region, c, fill, bc_t)
    k, log_s = mu.meta["k"], mu.meta["log_s"]
    codes = mu.states
    worst = (math.inf, None, None, None)
    E = region.n_edges
    for e in range(E):
        for f in range(e + 1, E):
            base = codes[((codes >> e) & 1 == 0) & ((codes >> f) & 1 == 0)]
            be, bf, bef = base | (1 << e), base | (1 << f), base | (1 << e) | (1 << f)
            dk = (k[bef] + k[base] - k[be] - k[bf]) * LOG2
            up = log_s[bef] + log_s[base]
            down = log_s[be] + log_s[bf]
            with np.errstate(invalid="ignore"):
                m = np.where(np.isneginf(down), np.inf,
                             np.where(np.isneginf(up), -np.inf, dk + up - down))
            i = int(np.argmin(m))
            if m[i] < worst[0]:
                worst = (float(m[i]), int(base[i]), e, f)
    return {"passed": worst[0] >= -tol, "worst_margin": worst[0], "context": worst[1],
            "edges": (worst[2], worst[3])}


def _edge_signature(mu):
    return mu.meta.get("edges"), len(mu.states)


def stochastic_domination_check(mu: EnumeratedMeasure, nu: EnumeratedMeasure, mode="exact",
                                tol=1e-10) -> dict:
    """Decide μ ≤_st ν on the same edge set.

    ``exact`` builds the monotone-coupling transport network and checks that
    the maximal flow carries all of μ; ``holley`` checks the pairwise
    sufficient condition and reports "certified" or "inconclusive".
    """
    if _edge_signature(mu) != _edge_signature(nu) or not np.array_equal(mu.states, nu.states):
        raise ValueError("measures are on different edge sets")
    if mode == "holley":
        ok, margin = holley_condition(mu, nu)
        return {"mode": "holley", "result": "certified" if ok else "inconclusive", "margin": margin}
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    n_edges = len(mu.meta.get("edges") or ()) or int(np.log2(len(mu.states)))
    limits.require(n_edges <= 12, "exact domination certificate is capped at 12 edges")
    import networkx as nx

    p, q = mu.probs, nu.probs
    codes = mu.states
    scale = float(1 << 50)
    g = nx.DiGraph()
    src = [i for i in range(len(codes)) if p[i] > 0]
    dst = [j for j in range(len(codes)) if q[j] > 0]
    for i in src:
        g.add_edge("source", ("a", i), capacity=int(p[i] * scale))
    for j in dst:
        g.add_edge(("b", j), "sink", capacity=int(q[j] * scale))
    dst_codes = codes[dst]
    for i in src:
        for j in np.asarray(dst)[(codes[i] & ~dst_codes) == 0]:
            g.add_edge(("a", i), ("b", int(j)))
    if "source" not in g or "sink" not in g:
        return {"mode": "exact", "dominated": False, "flow": 0.0}
    flow = nx.maximum_flow_value(g, "source", "sink") / scale
    need = sum(int(p[i] * scale) for i in src) / scale
    return {"mode": "exact", "dominated": bool(flow >= need - tol), "flow": flow, "needed": need}


def holley_condition(mu: EnumeratedMeasure, nu: EnumeratedMeasure):
    """min over ω, ω' of log ν(ω∨ω') + log μ(ω∧ω') - log ν(ω) - log μ(ω')."""
    codes = mu.states
    lm, ln = mu.logw - mu.logZ, nu.logw - nu.logZ
    index = {int(x): i for i, x in enumerate(codes)}
    pos = np.array([index[int(x)] for x in range(len(codes))]) if len(index) == (1 << int(np.log2(len(codes)))) else None
    if pos is None:
        raise ValueError("Holley check needs the full edge cube")
    worst = math.inf
    step = max(1, _CHUNK // len(codes))
    for a in range(0, len(codes), step):
        w = codes[a:a + step, None]
        v = codes[None, :]
        join = ln[pos[w | v]]
        meet = lm[pos[w & v]]
        lhs = join + meet
        rhs = ln[a:a + step, None] + lm[None, :]
        with np.errstate(invalid="ignore"):
            m = np.where(np.isneginf(rhs), np.inf, np.where(np.isneginf(lhs), -np.inf, lhs - rhs))
        worst = min(worst, float(m.min()))
    return worst >= -1e-12, worst


def restrict(measure: EnumeratedMeasure, region_big: Region, region_small: Region,
             context: int | None = None) -> EnumeratedMeasure:
    """Law of the edges of ``region_small`` under a measure on ``region_big``,
    optionally conditioned on the remaining edges equal to ``context``."""
    pos = [region_big.edge_index[key] for key in region_small.edge_index]
    others = [e for e in range(region_big.n_edges) if e not in set(pos)]
    codes = measure.states
    small = np.zeros_like(codes)
    for j, e in enumerate(pos):
        small |= ((codes >> e) & 1) << j
    outer = np.zeros_like(codes)
    for j, e in enumerate(others):
        outer |= ((codes >> e) & 1) << j
    keep = np.ones(len(codes), dtype=bool) if context is None else outer == context
    states = np.arange(1 << len(pos), dtype=np.int64)
    logw = np.full(len(states), -np.inf)
    for s in states:
        sel = keep & (small == s)
        if sel.any():
            logw[s] = _lse(measure.logw[sel])
    meta = dict(measure.meta)
    meta["edges"] = tuple(region_small.edge_index)
    return EnumeratedMeasure("edges", states, logw, meta)


def maximality_check(small: Region, big: Region, c, n_contexts: int = 64, seed: int = 0) -> dict:
    """Compare GAT^{1,f} on ``big`` restricted to the edges of ``small`` (given
    an exterior context) with GAT^{1,f} on ``small``.

    Every context is checked when there are at most ``n_contexts`` of them;
    otherwise a seeded sample plus the unconditioned restriction.
    """
    missing = set(small.edge_index) - set(big.edge_index)
    if missing:
        raise ValueError("edges of the small region must lie in the big one")
    mu_big = gat_law(big, c, 1, FREE)
    target = gat_law(small, c, 1, FREE)
    n_out = big.n_edges - small.n_edges
    if (1 << n_out) <= n_contexts:
        contexts = list(range(1 << n_out))
    else:
        rng = np.random.default_rng(seed)
        contexts = sorted({int(x) for x in rng.integers(0, 1 << n_out, size=n_contexts)})
    results = []
    for ctx in [None] + contexts:
        m = restrict(mu_big, big, small, ctx)
        if not np.isfinite(m.logZ):
            continue
        results.append((ctx, stochastic_domination_check(m, target)["dominated"]))
    return {"all_dominated": all(ok for _, ok in results), "checked": len(results),
            "exhaustive": (1 << n_out) <= n_contexts, "results": results}


def griffiths_check(region: Region, J: float, Jp: float, U: float, A) -> dict:
    """⟨prod_A τ⟩ under (+,+) against the even-intersection event for finite clusters."""
    if not J >= min(abs(Jp), abs(U)):
        raise ValueError("needs J >= min(|J'|, |U|)")
    # τ_x² = 1, so only sites listed an odd number of times matter
    seen = Counter(region.index[tuple(x)] if not np.isscalar(x) else int(x) for x in A)
    idx = sorted(x for x, k in seen.items() if k % 2)
    base = Couplings.at(J, Jp, U)
    c = base if J >= abs(U) else base.permuted((0, 2, 1))
    spins = PairEnumeration(region, base, PLUS, PLUS)
    lhs = spins.moment(idx)
    gat = gat_law(region, c, 1, PLUS)
    _, roots = cluster_roots(region, gat)
    outer = roots[:, np.flatnonzero(~region.interior)[0]] if (~region.interior).any() else None
    ok = np.ones(len(gat.states), dtype=bool)
    for r in range(len(gat.states)):
        counts = {}
        for x in idx:
            root = roots[r, x]
            if outer is not None and root == outer[r]:
                continue
            counts[root] = counts.get(root, 0) + 1
        ok[r] = all(v % 2 == 0 for v in counts.values())
    rhs = gat.expect(ok.astype(float))
    return {"moment": lhs, "event_probability": rhs, "gap": abs(lhs - rhs),
            "couplings_used": c}


def is_increasing(values, codes) -> bool:
    """Whether a function on the edge cube is non-decreasing in every coordinate."""
    codes = np.asarray(codes)
    values = np.asarray(values)
    pos = np.empty(len(codes), dtype=np.int64)
    pos[codes] = np.arange(len(codes))
    E = int(np.log2(len(codes)))
    for e in range(E):
        lo = codes[(codes >> e) & 1 == 0]
        if np.any(values[pos[lo | (1 << e)]] < values[pos[lo]]):
            return False
    return True


def boundary_event(region: Region, x: int):
    """Indicator function of {x joined to a site off the region}, fill 1."""
    def event(codes):
        bits = codes_to_bits(codes, region.n_edges)
        _, roots = cluster_table(region, bits, 1)
        bnd = np.flatnonzero(~region.interior)
        return (roots[:, bnd] == roots[:, [x]]).any(axis=1).astype(float)
    return event


def russo_check(region: Region, kappa: float, kappa_p: float, beta: float, event, h: float = 1e-4,
                eps: float | None = None, tol: float = 1e-8) -> dict:
    """Compare d/dβ E[X] with ε Cov(X, |ω|) along the anisotropic curve under GAT^{1,f}."""
    from . import curves

    codes = edge_states(region)
    X = event(codes)
    if not is_increasing(X, codes):
        raise ValueError("event is not increasing")
    if eps is None:
        eps = curves.gamma_slope_infimum(kappa, kappa_p, extra=[beta])

    def mean(b):
        mu = gat_law(region, curves.gamma(kappa, kappa_p, b).couplings, 1, FREE)
        return mu.expect(X)

    lhs = (-mean(beta + 2 * h) + 8 * mean(beta + h) - 8 * mean(beta - h) + mean(beta - 2 * h)) / (12 * h)
    mu = gat_law(region, curves.gamma(kappa, kappa_p, beta).couplings, 1, FREE)
    n_open = popcount(codes).astype(float)
    cov = mu.expect(X * n_open) - mu.expect(X) * mu.expect(n_open)
    rhs = eps * cov
    return {"beta": beta, "lhs": lhs, "rhs": rhs, "eps": eps, "cov": cov,
            "holds": lhs >= rhs - tol, "slack": lhs - rhs}


# ------------------------------------------------------------- pair coupling

def atrc_log_weights(region: Region, c, fill: int, fill2: int, rows=None):
    """Log-weights of (ω, ω') as a matrix (rows ω, columns ω')."""
    c = as_couplings(c)
    u1, u2, u3, _ = atrc_weights(c)
    if min(u1, u2, u3) < 0:
        raise ValueError("pair coupling needs u1, u2, u3 >= 0")
    lu = [math.log(u) if u > 0 else -math.inf for u in (u1, u2, u3)]
    codes = edge_states(region)
    bits = codes_to_bits(codes, region.n_edges)
    k1, _ = cluster_table(region, bits, fill)
    k2, _ = cluster_table(region, bits, fill2)
    n = popcount(codes)
    rows = codes if rows is None else rows
    inter = np.bitwise_count(rows[:, None] & codes[None, :]).astype(np.int64)
    logw = (xlogy(n[rows][:, None] - inter, lu[0]) + xlogy(n[None, :] - inter, lu[1])
            + xlogy(inter, lu[2]) + LOG2 * (k1[rows][:, None] + k2[None, :]))
    return codes, logw


def _pair_histogram(region: Region, fill_other: int):
    """Sparse counts, per edge configuration ω, of partners ω' grouped by
    (|ω'|, |ω ∩ ω'|, clusters of ω' under ``fill_other``).

    Returned as (row starts, q, i, k, log count) with entries sorted by row.
    """
    def build():
        codes = edge_states(region)
        E1 = region.n_edges + 1
        bits = codes_to_bits(codes, region.n_edges)
        k_other, _ = cluster_table(region, bits, fill_other)
        K1 = int(k_other.max()) + 1
        width = E1 * E1 * K1
        partner = popcount(codes) * E1 * K1 + k_other
        rows, cols, counts = [], [], []
        step = max(1, _CHUNK // len(codes))
        for a in range(0, len(codes), step):
            chunk = codes[a:a + step]
            m = len(chunk)
            inter = np.bitwise_count(chunk[:, None] & codes[None, :]).astype(np.int64)
            idx = (np.arange(m)[:, None] * width + partner[None, :] + inter * K1).ravel()
            hist = np.bincount(idx, minlength=m * width).reshape(m, width)
            r, col = np.nonzero(hist)
            rows.append(r + a)
            cols.append(col)
            counts.append(hist[r, col])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        q, rem = np.divmod(cols, E1 * K1)
        i, k = np.divmod(rem, K1)
        starts = np.searchsorted(rows, np.arange(len(codes)))
        return starts, q, i, k, np.log(np.concatenate(counts).astype(float)), rows

    return _cached(("pair", region_key(region), int(fill_other)), build, region.n_edges)


def _segment_lse(vals, starts):
    mx = np.maximum.reduceat(vals, starts)
    shift = np.where(np.isfinite(mx), mx, 0.0)
    lengths = np.diff(np.append(starts, len(vals)))
    with np.errstate(under="ignore"):
        tot = np.add.reduceat(np.exp(vals - np.repeat(shift, lengths)), starts)
    with np.errstate(divide="ignore"):
        return np.log(tot) + shift


def atrc_marginals(region: Region, c, fill: int, fill2: int):
    """Both marginals of the pair coupling as edge measures."""
    c = as_couplings(c)
    u1, u2, u3, _ = atrc_weights(c)
    if min(u1, u2, u3) < 0:
        raise ValueError("pair coupling needs u1, u2, u3 >= 0")
    lu1, lu2, lu3 = (math.log(u) if u > 0 else -math.inf for u in (u1, u2, u3))
    codes = edge_states(region)
    bits = codes_to_bits(codes, region.n_edges)
    n = popcount(codes)
    k1, _ = cluster_table(region, bits, fill)
    k2, _ = cluster_table(region, bits, fill2)

    def side(fill_other, l_own, l_other):
        starts, q, i, k, logc, rows = _pair_histogram(region, fill_other)
        vals = logc + xlogy(n[rows] - i, l_own) + xlogy(q - i, l_other) + xlogy(i, lu3) + LOG2 * k
        return _segment_lse(vals, starts)

    m1 = LOG2 * k1 + side(fill2, lu1, lu2)
    m2 = LOG2 * k2 + side(fill, lu2, lu1)
    edges = tuple(region.edge_index)
    first = EnumeratedMeasure("edges", codes, m1, {"fill": fill, "edges": edges})
    second = EnumeratedMeasure("edges", codes, m2, {"fill": fill2, "edges": edges})
    return first, second


def atrc_pair_measure(region: Region, c, fill: int, fill2: int) -> EnumeratedMeasure:
    """Pair law flattened as state ω * 2^|E| + ω'."""
    codes, lw = atrc_log_weights(region, c, fill, fill2)
    E = region.n_edges
    states = (codes[:, None] << E | codes[None, :]).ravel()
    return EnumeratedMeasure("edge-pairs", states, lw.ravel(), {"n_edges": E, "edges": tuple(region.edge_index)})


def negative_product_correlation(region: Region, c, bc_s: Boundary, bc_t: Boundary, x) -> tuple:
    """(⟨s_x s'_x⟩, ⟨s_x⟩⟨s'_x⟩) for the recorded sign observation."""
    pe = PairEnumeration(region, c, bc_s, bc_t)
    i = region.index[tuple(x)] if not np.isscalar(x) else int(x)
    return pe.product_moment(i), pe.magnetisation(i, 0) * pe.magnetisation(i, 1)


__all__ = [
    "EnumeratedMeasure", "LayerStates", "PairEnumeration", "at_law", "at_weight", "log_at_weight",
    "log_at_weight_disagreement", "joint_weight", "log_joint_weight", "gat_law", "gat_law_from_joint",
    "tv_distance", "correlation_equals_connection", "finite_energy_check", "finite_energy_bounds",
    "fkg_lattice_check", "stochastic_domination_check", "holley_condition", "maximality_check",
    "griffiths_check", "russo_check", "atrc_marginals", "atrc_pair_measure", "boundary_product",
]

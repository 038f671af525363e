"""Finite regions of Z^d: closure, canonical edges, parity, clusters, and the
planar dual used by the vertex models."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels


def _unit(d, axis):
    v = [0] * d
    v[axis] = 1
    return tuple(v)


def _add(x, y):
    return tuple(a + b for a, b in zip(x, y))


def _sub(x, y):
    return tuple(a - b for a, b in zip(x, y))


class Region:
    """A finite vertex set Λ ⊂ Z^d with its closure Λ̄ and edge set Ē_Λ.

    Vertices of the closure are sorted lexicographically; edges are sorted by
    (lower endpoint, axis).  All later bit layouts use these two orders.
    """

    def __init__(self, sites, d: int | None = None):
        pts = sorted({tuple(int(c) for c in x) for x in sites})
        if d is None:
            if not pts:
                raise ValueError("empty region needs an explicit dimension")
            d = len(pts[0])
        if any(len(p) != d for p in pts):
            raise ValueError("sites of mixed dimension")
        if d < 1:
            raise ValueError("dimension must be positive")
        self.d = d
        inner = set(pts)
        closure = set(pts)
        for p in pts:
            for a in range(d):
                e = _unit(d, a)
                closure.add(_add(p, e))
                closure.add(_sub(p, e))
        self.vertices = sorted(closure)
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.coords = np.array(self.vertices, dtype=np.int64).reshape(-1, d)
        self.interior = np.array([v in inner for v in self.vertices], dtype=bool)
        self.parity = (self.coords.sum(axis=1) % 2).astype(np.int8)
        eu, ev, ax = [], [], []
        for i, u in enumerate(self.vertices):
            for a in range(d):
                w = _add(u, _unit(d, a))
                j = self.index.get(w)
                if j is not None and (u in inner or w in inner):
                    eu.append(i)
                    ev.append(j)
                    ax.append(a)
        self.edge_u = np.array(eu, dtype=np.int64)
        self.edge_v = np.array(ev, dtype=np.int64)
        self.edge_axis = np.array(ax, dtype=np.int64)
        self.edge_index = {(self.vertices[u], a): k for k, (u, a) in enumerate(zip(eu, ax))}
        self._build_incidence()
        self._build_outer()

    @property
    def n_sites(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    @property
    def boundary(self) -> np.ndarray:
        return ~self.interior

    @property
    def stagger(self) -> np.ndarray:
        """+1 on even and -1 on odd vertices (the alternating configuration)."""
        return (1 - 2 * self.parity).astype(np.int8)

    def edge_key(self, e: int):
        return self.vertices[self.edge_u[e]], int(self.edge_axis[e])

    def edges_at(self, x) -> list[int]:
        i = self.index[tuple(x)]
        return sorted(int(e) for e in self.inc_edge[self.inc_ptr[i]:self.inc_ptr[i + 1]])

    def _build_incidence(self):
        n = self.n_sites
        nbrs = [[] for _ in range(n)]
        for k, (u, v) in enumerate(zip(self.edge_u, self.edge_v)):
            nbrs[u].append((int(v), k))
            nbrs[v].append((int(u), k))
        self.degree = np.array([len(b) for b in nbrs], dtype=np.int64)
        self.inc_ptr = np.concatenate([[0], np.cumsum(self.degree)]).astype(np.int64)
        flat = [p for b in nbrs for p in b]
        self.inc_nbr = np.array([p[0] for p in flat], dtype=np.int64)
        self.inc_edge = np.array([p[1] for p in flat], dtype=np.int64)

    def _build_outer(self):
        # components of Z^d minus Λ, seen from the boundary vertices
        self.outer_label = np.full(self.n_sites, -1, dtype=np.int64)
        bnd = [i for i in range(self.n_sites) if not self.interior[i]]
        if not bnd:
            return
        inner = {v for v, f in zip(self.vertices, self.interior) if f}
        lo = self.coords.min(axis=0) - 1
        hi = self.coords.max(axis=0) + 1
        seen = {}
        label = 0
        for i in bnd:
            start = self.vertices[i]
            if start in seen:
                continue
            seen[start] = label
            queue = deque([start])
            while queue:
                p = queue.popleft()
                for a in range(self.d):
                    for sgn in (1, -1):
                        q = list(p)
                        q[a] += sgn
                        q = tuple(q)
                        if q in seen or q in inner:
                            continue
                        if any(c < l or c > h for c, l, h in zip(q, lo, hi)):
                            continue
                        seen[q] = label
                        queue.append(q)
            label += 1
        for i in bnd:
            self.outer_label[i] = seen[self.vertices[i]]

    def base_parent(self, fill: int) -> np.ndarray:
        """Initial union-find parents: with fill 1 off-region vertices are pre-merged."""
        base = np.arange(self.n_sites, dtype=np.int64)
        if fill:
            reps = {}
            for i in range(self.n_sites):
                lab = self.outer_label[i]
                if lab >= 0:
                    base[i] = reps.setdefault(lab, i)
        return base

    def __repr__(self):
        return f"Region(d={self.d}, |Λ|={self.n_interior}, |Λ̄|={self.n_sites}, |E|={self.n_edges})"


class BoxRegion(Region):
    """The box B_n(center) = center + {-n..n}^d."""

    def __init__(self, d: int, n: int, center=None):
        if d < 2 or n < 0:
            raise ValueError("need d >= 2 and n >= 0")
        center = tuple(center) if center is not None else (0,) * d
        sites = [_add(center, off) for off in itertools.product(range(-n, n + 1), repeat=d)]
        super().__init__(sites, d)
        self.n = n
        self.center = center


def block(*shape: int) -> Region:
    """Axis-aligned block {0..a-1} x {0..b-1} x ..."""
    return Region(itertools.product(*(range(s) for s in shape)), len(shape))


@dataclass(frozen=True)
class EdgeConfig:
    """Open/closed state of every edge of Ē_Λ plus the value ``fill`` off it."""

    open: np.ndarray
    fill: int = 0

    @classmethod
    def from_code(cls, code: int, n_edges: int, fill: int = 0) -> EdgeConfig:
        bits = (int(code) >> np.arange(n_edges)) & 1
        return cls(bits.astype(bool), fill)

    @property
    def code(self) -> int:
        return int(sum(1 << i for i, b in enumerate(self.open) if b))

    def __len__(self):
        return len(self.open)


def codes_to_bits(codes, n_edges: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n_edges, dtype=np.int64)) & 1).astype(bool)


def cluster_labels(region: Region, omega: EdgeConfig) -> np.ndarray:
    """Cluster root of every vertex of Λ̄."""
    _, roots = _kernels.cluster_batch(
        np.asarray(omega.open, dtype=bool)[None, :], region.edge_u, region.edge_v,
        region.base_parent(omega.fill))
    return roots[0]


def cluster_count(region: Region, omega: EdgeConfig) -> int:
    """k_Λ(ω): clusters meeting Λ̄; with fill 1 the off-region part is one cluster
    per component of Z^d minus Λ."""
    if len(omega.open) != region.n_edges:
        raise ValueError("edge configuration does not match the region")
    counts, _ = _kernels.cluster_batch(
        np.asarray(omega.open, dtype=bool)[None, :], region.edge_u, region.edge_v,
        region.base_parent(omega.fill))
    return int(counts[0])


def cluster_table(region: Region, bits: np.ndarray, fill: int):
    """Counts and roots for a batch of edge configurations given as a bool matrix."""
    return _kernels.cluster_batch(np.ascontiguousarray(bits, dtype=bool), region.edge_u,
                                  region.edge_v, region.base_parent(fill))


def connects_outside(region: Region, roots: np.ndarray, x: int) -> np.ndarray:
    """Whether vertex index ``x`` reaches a vertex off Λ, for each row of roots."""
    bnd = np.flatnonzero(~region.interior)
    if bnd.size == 0:
        return np.zeros(roots.shape[0], dtype=bool)
    return (roots[:, bnd] == roots[:, [x]]).any(axis=1)


class DualGeometry:
    """Planar dual of a domain Λ ⊂ Z².

    Faces are indexed by their lower-left corner; the star set Λ* holds the unit
    squares whose four sides lie in Ē_Λ.  Every primal edge e is paired with the
    dual edge e* joining the faces on either side of it, and each primal
    endpoint with each dual endpoint of that pair forms a quad.
    """

    def __init__(self, region: Region):
        if region.d != 2:
            raise ValueError("dual geometry needs d = 2")
        self.region = region
        edges = set(region.edge_index)

        def sides(c):
            x, y = c
            return [((x, y), 0), ((x, y + 1), 0), ((x, y), 1), ((x + 1, y), 1)]

        faces = set()
        pairs = []
        for k in range(region.n_edges):
            u, a = region.edge_key(k)
            if a == 0:
                f1, f2 = (u[0], u[1] - 1), u
            else:
                f1, f2 = (u[0] - 1, u[1]), u
            faces.update((f1, f2))
            pairs.append((f1, f2))
        star = sorted(f for f in faces if all(s in edges for s in sides(f)))
        n_components = len(set(cluster_labels(region, EdgeConfig(np.ones(region.n_edges, bool), 0))))
        bounded = region.n_edges - region.n_sites + n_components
        if bounded != len(star):
            raise ValueError("region is not a domain: some bounded face is not a unit square")
        self.faces = sorted(faces)
        self.findex = {f: i for i, f in enumerate(self.faces)}
        starset = set(star)
        self.in_star = np.array([f in starset for f in self.faces], dtype=bool)
        self.coords = np.array(self.faces, dtype=float).reshape(-1, 2) + 0.5
        self.dual_u = np.array([self.findex[p[0]] for p in pairs], dtype=np.int64)
        self.dual_v = np.array([self.findex[p[1]] for p in pairs], dtype=np.int64)
        self.quads = np.stack([region.edge_u, region.edge_v, self.dual_u, self.dual_v], axis=1) \
            if region.n_edges else np.zeros((0, 4), dtype=np.int64)
        self._build_quad_adjacency()

    @property
    def n_dual(self) -> int:
        return len(self.faces)

    @property
    def n_star(self) -> int:
        return int(self.in_star.sum())

    def _build_quad_adjacency(self):
        n, nd = self.region.n_sites, self.n_dual
        prim = [set() for _ in range(n)]
        dual = [set() for _ in range(nd)]
        for u, v, p, q in self.quads:
            for x in (u, v):
                for f in (p, q):
                    prim[x].add(int(f))
                    dual[f].add(int(x))
        self.qp_ptr = np.concatenate([[0], np.cumsum([len(s) for s in prim])]).astype(np.int64)
        self.qp_idx = np.array([f for s in prim for f in sorted(s)], dtype=np.int64)
        self.qd_ptr = np.concatenate([[0], np.cumsum([len(s) for s in dual])]).astype(np.int64)
        self.qd_idx = np.array([x for s in dual for x in sorted(s)], dtype=np.int64)

    def quad_pairs(self) -> np.ndarray:
        """Distinct (primal, dual) index pairs that share a quad."""
        rows = [(x, int(self.qp_idx[q])) for x in range(self.region.n_sites)
                for q in range(self.qp_ptr[x], self.qp_ptr[x + 1])]
        return np.array(rows, dtype=np.int64).reshape(-1, 2)

    def disagreement(self, sigma_circ: np.ndarray) -> np.ndarray:
        """Primal edges whose dual edge joins faces of different dual spin."""
        sc = np.asarray(sigma_circ)
        return sc[..., self.dual_u] != sc[..., self.dual_v]

    def dual_cluster_count(self, omega: EdgeConfig) -> int:
        """k_{Λ*}(ω*) for ω with closed fill: dual edges of edges off Ē_Λ are open."""
        if omega.fill != 0:
            raise ValueError("dual count is defined for closed fill")
        region = self.region
        xs = [f[0] for f in self.faces] or [0]
        ys = [f[1] for f in self.faces] or [0]
        lo_x, hi_x = min(xs) - 2, max(xs) + 2
        lo_y, hi_y = min(ys) - 2, max(ys) + 2
        grid = [(x, y) for x in range(lo_x, hi_x + 1) for y in range(lo_y, hi_y + 1)]
        gi = {f: i for i, f in enumerate(grid)}
        parent = list(range(len(grid)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for (x, y) in grid:
            # dual edge to the right crosses the vertical primal edge at (x+1, y)
            for nb, key in (((x + 1, y), ((x + 1, y), 1)), ((x, y + 1), ((x, y + 1), 0))):
                if nb not in gi:
                    continue
                k = region.edge_index.get(key)
                if k is not None and omega.open[k]:
                    continue
                a, b = find(gi[(x, y)]), find(gi[nb])
                if a != b:
                    parent[max(a, b)] = min(a, b)
        # bounded faces of ω are unions of star squares; everything else joins the outer face
        return len({find(i) for i in range(len(grid))})


def dual_config(geom: DualGeometry, omega: EdgeConfig) -> EdgeConfig:
    """ω*_{e*} = 1 - ω_e, indexed like the primal edges."""
    if geom.region.d != 2:
        raise ValueError("dual configuration needs d = 2")
    return EdgeConfig(~np.asarray(omega.open, dtype=bool), 1 - omega.fill)


def euler_identity_check(geom: DualGeometry, omega: EdgeConfig) -> bool:
    if omega.fill != 0:
        raise ValueError("Euler identity is stated for closed fill")
    region = geom.region
    lhs = cluster_count(region, omega)
    rhs = region.n_sites - int(np.count_nonzero(omega.open)) + geom.dual_cluster_count(omega) - 1
    return lhs == rhs

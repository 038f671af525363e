"""Peierls contours: the closed edge set surrounding a finite connected vertex
set, exact enumeration of blocking edge sets, and the counting bound."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import limits
from .lattice import Region

DEFAULT_CAP_2D = 12


def _neighbours(c):
    for a in range(len(c)):
        for sgn in (1, -1):
            n = list(c)
            n[a] += sgn
            yield tuple(n), a, sgn


def is_connected(cells) -> bool:
    cells = set(cells)
    if not cells:
        return False
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        c = stack.pop()
        for n, _, _ in _neighbours(c):
            if n in cells and n not in seen:
                seen.add(n)
                stack.append(n)
    return len(seen) == len(cells)


def _boundary_plaquettes(cells):
    """Edges with exactly one endpoint in ``cells`` as (lower endpoint, axis)."""
    out = []
    for c in cells:
        for n, a, sgn in _neighbours(c):
            if n not in cells:
                out.append((c if sgn > 0 else n, a))
    return out


def _boxes(plaq):
    """Each plaquette as an axis-aligned box in doubled coordinates."""
    lo, hi = [], []
    for u, a in plaq:
        m = [2 * x for x in u]
        m[a] += 1
        lo.append([m[b] if b == a else m[b] - 1 for b in range(len(u))])
        hi.append([m[b] if b == a else m[b] + 1 for b in range(len(u))])
    return np.array(lo), np.array(hi)


def contour_edges(cells) -> frozenset:
    """E(C): edges crossing the component of the boundary of the union of unit
    cubes around C that separates C from infinity."""
    cells = {tuple(int(v) for v in c) for c in cells}
    if not is_connected(cells):
        raise ValueError("vertex set must be nonempty and connected")
    plaq = _boundary_plaquettes(cells)
    lo, hi = _boxes(plaq)
    overlap = np.minimum(hi[:, None, :], hi[None, :, :]) - np.maximum(lo[:, None, :], lo[None, :, :])
    touch = np.all(overlap >= 0, axis=2)
    _, label = connected_components(coo_matrix(touch), directed=False)
    # the +axis-0 face of the cell with the largest first coordinate is outermost
    top = max(cells)
    outer = label[plaq.index((top, 0))]
    return frozenset(p for p, lab in zip(plaq, label) if lab == outer)


@lru_cache(maxsize=None)
def rooted_animals(d: int, max_size: int) -> tuple:
    """Connected vertex sets of size <= max_size whose lexicographically
    smallest vertex is the origin (Redelmeier's method)."""
    origin = (0,) * d
    out = []
    marked = {origin}

    def grow(untried, current):
        untried = list(untried)
        while untried:
            c = untried.pop()
            new = current + [c]
            out.append(tuple(new))
            if len(new) < max_size:
                fresh = [n for n, _, _ in _neighbours(c) if n > origin and n not in marked
                         and all(n not in set(_nb(x)) for x in current)]
                for n in fresh:
                    marked.add(n)
                grow(untried + fresh, new)
                for n in fresh:
                    marked.discard(n)

    grow([origin], [])
    return tuple(out)


def _nb(c):
    return [n for n, _, _ in _neighbours(c)]


def max_cells(k: int, d: int) -> int:
    """Largest |C| compatible with |E(C)| <= k.

    Every line parallel to an axis through C crosses the outer contour at
    least twice, so the bounding box l_1 x ... x l_d satisfies
    2 sum_a prod_{b != a} l_b <= k, and |C| <= prod l.
    """
    best = 0
    for ls in itertools.product(range(1, k + 1), repeat=d):
        surface = 2 * sum(int(np.prod([l for j, l in enumerate(ls) if j != a])) for a in range(d))
        if surface <= k:
            best = max(best, int(np.prod(ls)))
    return best


def _cap(k, d, cap):
    if cap is None:
        cap = DEFAULT_CAP_2D if d == 2 else 2 * d + 4
    limits.require(k <= cap, f"blocking enumeration is capped at k <= {cap} in d = {d}")


def enumerate_blocking(x, k: int, d: int = 2, cap: int | None = None) -> list:
    """All edge sets of size k that block x, each as a sorted tuple of
    (lower endpoint, axis) pairs."""
    _cap(k, d, cap)
    x = tuple(x) if x is not None else (0,) * d
    if k < 2 * d:
        return []
    found = set()
    for animal in rooted_animals(d, max_cells(k, d)):
        for a in animal:
            cells = [tuple(xi + ci - ai for xi, ci, ai in zip(x, c, a)) for c in animal]
            F = contour_edges(cells)
            if len(F) == k:
                found.add(F)
    return sorted(tuple(sorted(F)) for F in found)


def blocking_in(edges, k: int, d: int, cap: int | None = None) -> set:
    """Blocking F contained in ``edges`` with |F| = k."""
    _cap(k, d, cap)
    edges = set(edges)
    if k < 2 * d:
        return set()
    roots = set()
    for u, a in edges:
        roots.add(tuple(u))
        v = list(u)
        v[a] += 1
        roots.add(tuple(v))
    found = set()
    for animal in rooted_animals(d, max_cells(k, d)):
        for r in roots:
            cells = [tuple(ri + ci for ri, ci in zip(r, c)) for c in animal]
            F = contour_edges(cells)
            if len(F) == k and F <= edges:
                found.add(F)
    return found


def blocking_count_bound(n_edges: int, k: int, d: int) -> int:
    deg = 6 * (d - 1)
    return n_edges * deg ** (deg * k)


def plaquette_graph_degree(edges) -> int:
    """Maximum degree of the graph on ``edges`` where two edges are joined when
    their plaquettes share a (d-2)-dimensional face."""
    edges = list(edges)
    if not edges:
        return 0
    d = len(edges[0][0])
    lo, hi = _boxes(edges)
    overlap = np.minimum(hi[:, None, :], hi[None, :, :]) - np.maximum(lo[:, None, :], lo[None, :, :])
    meet = np.all(overlap >= 0, axis=2)
    dims = (overlap > 0).sum(axis=2)
    adj = meet & (dims == d - 2)
    np.fill_diagonal(adj, False)
    return int(adj.sum(axis=1).max())


def bound_check(region: Region, k: int, cap: int | None = None) -> dict:
    edges = list(region.edge_index)
    count = len(blocking_in(edges, k, region.d, cap))
    bound = blocking_count_bound(len(edges), k, region.d)
    deg = plaquette_graph_degree(edges)
    return {"k": k, "count": count, "bound": bound, "holds": count <= bound,
            "max_degree": deg, "degree_ok": deg <= 6 * (region.d - 1)}


def separates(F, cells, radius: int) -> bool:
    """Whether removing F cuts C off from the sphere of l-infinity radius ``radius``."""
    F = set(F)
    seen = set(cells)
    stack = list(cells)
    while stack:
        c = stack.pop()
        if max(abs(v) for v in c) >= radius:
            return False
        for n, a, sgn in _neighbours(c):
            key = (c if sgn > 0 else n, a)
            if key in F or n in seen:
                continue
            seen.add(n)
            stack.append(n)
    return True

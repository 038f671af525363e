"""Shared brute-force references written without the library's enumeration code."""

import itertools
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def boundary_value(bc, region, i):
    if bc.kind in ("plus", "free"):
        return 1
    if bc.kind == "minus":
        return -1
    if bc.kind == "alt":
        return bc.sign * (1 if sum(region.vertices[i]) % 2 == 0 else -1)
    return bc.values[i]


def layer_configs(region, bc):
    """Every ±1 assignment on the closure compatible with ``bc``."""
    free = [i for i in range(region.n_sites) if bc.kind == "free" or region.interior[i]]
    base = [boundary_value(bc, region, i) for i in range(region.n_sites)]
    for signs in itertools.product((1, -1), repeat=len(free)):
        s = list(base)
        for i, v in zip(free, signs):
            s[i] = v
        yield tuple(s)


def brute_at(region, K, Kp, Kpp, bc_s, bc_t):
    """{(s, t): probability} from the Hamiltonian summed edge by edge."""
    edges = list(zip(region.edge_u.tolist(), region.edge_v.tolist()))
    weights = {}
    for s in layer_configs(region, bc_s):
        for t in layer_configs(region, bc_t):
            h = 0.0
            for u, v in edges:
                a, b = s[u] * s[v], t[u] * t[v]
                h += K * a + Kp * b + Kpp * a * b
            weights[(s, t)] = math.exp(h)
    z = sum(weights.values())
    return {k: w / z for k, w in weights.items()}


def bfs_clusters(region, open_edges, fill):
    """Cluster count by breadth-first search; with fill 1 every boundary vertex
    is treated as joined through the outside (valid for boxes and blocks)."""
    n = region.n_sites
    adj = [[] for _ in range(n)]
    for e, (u, v) in enumerate(zip(region.edge_u.tolist(), region.edge_v.tolist())):
        if open_edges[e]:
            adj[u].append(v)
            adj[v].append(u)
    if fill:
        bnd = [i for i in range(n) if not region.interior[i]]
        for a, b in zip(bnd, bnd[1:]):
            adj[a].append(b)
            adj[b].append(a)
    seen = [False] * n
    count = 0
    for start in range(n):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        q = deque([start])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    q.append(y)
    return count


def bfs_connected(region, open_edges, fill, x, y):
    n = region.n_sites
    adj = [[] for _ in range(n)]
    for e, (u, v) in enumerate(zip(region.edge_u.tolist(), region.edge_v.tolist())):
        if open_edges[e]:
            adj[u].append(v)
            adj[v].append(u)
    if fill:
        bnd = [i for i in range(n) if not region.interior[i]]
        for a, b in zip(bnd, bnd[1:]):
            adj[a].append(b)
            adj[b].append(a)
    seen = {x}
    q = deque([x])
    while q:
        a = q.popleft()
        for b in adj[a]:
            if b not in seen:
                seen.add(b)
                q.append(b)
    return y in seen


def generative_edge_law(region, K, Kp, Kpp, bc_s, bc_t):
    """Edge law obtained by first drawing (s, t) from the spin law and then
    opening each edge independently: never where s disagrees, with
    probability 1 - e^{-2(K+K'')} where t agrees and 1 - e^{-2(K-K'')} where
    t disagrees."""
    E = region.n_edges
    pa = 1 - math.exp(-2 * (K + Kpp))
    pd = 1 - math.exp(-2 * (K - Kpp))
    law = np.zeros(1 << E)
    codes = np.arange(1 << E)
    bits = ((codes[:, None] >> np.arange(E)) & 1).astype(bool)
    for (s, t), p in brute_at(region, K, Kp, Kpp, bc_s, bc_t).items():
        probs = np.empty(E)
        for e, (u, v) in enumerate(zip(region.edge_u.tolist(), region.edge_v.tolist())):
            if s[u] != s[v]:
                probs[e] = 0.0
            else:
                probs[e] = pa if t[u] == t[v] else pd
        law += p * np.prod(np.where(bits, probs, 1 - probs), axis=1)
    return law


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

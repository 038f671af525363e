"""Compiled inner loops: union-find, counter-based uniforms, heat-bath sweeps,
edge sampling and height reconstruction."""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def uniform(key, counter):
    """Uniform on [0, 1) that depends only on (key, counter)."""
    z = splitmix64(key ^ splitmix64(counter))
    return np.float64(z >> np.uint64(11)) * _INV53


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if ra < rb:
        parent[rb] = ra
    else:
        parent[ra] = rb


@njit(cache=True)
def cluster_batch(omega, eu, ev, base):
    """Cluster roots and counts for each row of a boolean edge matrix.

    ``base`` is the initial parent array; with an open fill it already links the
    boundary vertices that are joined outside the region.
    """
    m, ne = omega.shape
    n = base.shape[0]
    counts = np.empty(m, np.int64)
    roots = np.empty((m, n), np.int32)
    parent = np.empty(n, np.int64)
    for r in range(m):
        for i in range(n):
            parent[i] = base[i]
        for e in range(ne):
            if omega[r, e]:
                _union(parent, eu[e], ev[e])
        k = 0
        for i in range(n):
            root = _find(parent, i)
            roots[r, i] = root
            if root == i:
                k += 1
        counts[r] = k
    return counts, roots


@njit(cache=True)
def run_sweeps(s, t, sites, free_s, free_t, ptr, nbr, K, Kp, Kpp, key, sweep0, n_sweeps):
    """Systematic heat-bath sweeps; each site draws its pair of spins jointly."""
    nu = sites.shape[0]
    for k in range(n_sweeps):
        base = np.uint64(sweep0 + k) * np.uint64(nu)
        for idx in range(nu):
            x = sites[idx]
            h1 = 0.0
            h2 = 0.0
            h3 = 0.0
            for q in range(ptr[x], ptr[x + 1]):
                y = nbr[q]
                h1 += s[y]
                h2 += t[y]
                h3 += s[y] * t[y]
            u = uniform(key, base + np.uint64(idx))
            if free_s[x] and free_t[x]:
                e0 = K * h1 + Kp * h2 + Kpp * h3
                e1 = K * h1 - Kp * h2 - Kpp * h3
                e2 = -K * h1 + Kp * h2 - Kpp * h3
                e3 = -K * h1 - Kp * h2 + Kpp * h3
                m = max(max(e0, e1), max(e2, e3))
                w0 = np.exp(e0 - m)
                w1 = np.exp(e1 - m)
                w2 = np.exp(e2 - m)
                w3 = np.exp(e3 - m)
                r = u * (w0 + w1 + w2 + w3)
                if r < w0:
                    s[x] = 1
                    t[x] = 1
                elif r < w0 + w1:
                    s[x] = 1
                    t[x] = -1
                elif r < w0 + w1 + w2:
                    s[x] = -1
                    t[x] = 1
                else:
                    s[x] = -1
                    t[x] = -1
            elif free_s[x]:
                f = K * h1 + Kpp * t[x] * h3
                s[x] = 1 if u * (1.0 + np.exp(-2.0 * f)) < 1.0 else -1
            elif free_t[x]:
                f = Kp * h2 + Kpp * s[x] * h3
                t[x] = 1 if u * (1.0 + np.exp(-2.0 * f)) < 1.0 else -1


@njit(cache=True)
def record_chain(s, t, sites, free_s, free_t, ptr, nbr, K, Kp, Kpp, key, sweep0,
                 n_samples, thin, out_s, out_t):
    sweep = sweep0
    for r in range(n_samples):
        run_sweeps(s, t, sites, free_s, free_t, ptr, nbr, K, Kp, Kpp, key, sweep, thin)
        sweep += thin
        for i in range(s.shape[0]):
            out_s[r, i] = s[i]
            out_t[r, i] = t[i]
    return sweep


@njit(cache=True)
def sample_edges(S, T, eu, ev, p1, p2, key, row0, out):
    """Edge sampling rule: closed on E_s, p1 on E_t minus E_s, p2 elsewhere."""
    m = S.shape[0]
    ne = eu.shape[0]
    for r in range(m):
        base = np.uint64(row0 + r) * np.uint64(ne)
        for e in range(ne):
            u = eu[e]
            v = ev[e]
            x = uniform(key, base + np.uint64(e))
            if S[r, u] != S[r, v]:
                out[r, e] = False
            elif T[r, u] != T[r, v]:
                out[r, e] = x < p1
            else:
                out[r, e] = x < p2


@njit(cache=True)
def heights_batch(T, omega, eu, ev, du, dv, in_star, qp_ptr, qp_idx, qd_ptr, qd_idx,
                  key, row0, sig_out, hp_out, hd_out, bad):
    """Colour dual clusters and integrate heights for each sample row.

    Dual vertices outside the star set are pinned to +1 and height 1.  ``bad[r]``
    flags a row whose increments are inconsistent, that breaks the ice rule or
    leaves a vertex unreached.
    """
    m, ne = omega.shape
    nd = in_star.shape[0]
    npr = T.shape[1]
    parent = np.empty(nd + 1, np.int64)
    sign = np.empty(nd + 1, np.int8)
    known_p = np.empty(npr, np.bool_)
    known_d = np.empty(nd, np.bool_)
    queue = np.empty(npr + nd, np.int64)
    for r in range(m):
        base = np.uint64(row0 + r) * np.uint64(nd + 1)
        for i in range(nd + 1):
            parent[i] = i
        for i in range(nd):
            if not in_star[i]:
                _union(parent, i, nd)
        for e in range(ne):
            if not omega[r, e]:
                _union(parent, du[e], dv[e])
        outer = _find(parent, nd)
        for i in range(nd + 1):
            sign[i] = 0
        sign[outer] = 1
        for i in range(nd):
            root = _find(parent, i)
            if sign[root] == 0:
                sign[root] = 1 if uniform(key, base + np.uint64(root)) < 0.5 else -1
            sig_out[r, i] = sign[root]
        # breadth-first integration; queue codes: primal x -> x, dual p -> npr + p
        head = 0
        tail = 0
        for i in range(npr):
            known_p[i] = False
        for i in range(nd):
            known_d[i] = not in_star[i]
            if known_d[i]:
                hd_out[r, i] = 1
                queue[tail] = npr + i
                tail += 1
        while head < tail:
            c = queue[head]
            head += 1
            if c < npr:
                for q in range(qp_ptr[c], qp_ptr[c + 1]):
                    p = qp_idx[q]
                    if not known_d[p]:
                        hd_out[r, p] = hp_out[r, c] + T[r, c] * sig_out[r, p]
                        known_d[p] = True
                        queue[tail] = npr + p
                        tail += 1
            else:
                p = c - npr
                for q in range(qd_ptr[p], qd_ptr[p + 1]):
                    x = qd_idx[q]
                    if not known_p[x]:
                        hp_out[r, x] = hd_out[r, p] - T[r, x] * sig_out[r, p]
                        known_p[x] = True
                        queue[tail] = x
                        tail += 1
        ok = tail == npr + nd
        if ok:
            for x in range(npr):
                if hp_out[r, x] % 2 != 0:
                    ok = False
                for q in range(qp_ptr[x], qp_ptr[x + 1]):
                    p = qp_idx[q]
                    if hd_out[r, p] - hp_out[r, x] != T[r, x] * sig_out[r, p]:
                        ok = False
        if ok:
            for e in range(ne):
                if T[r, eu[e]] != T[r, ev[e]] and sig_out[r, du[e]] != sig_out[r, dv[e]]:
                    ok = False
        bad[r] = not ok


@njit(cache=True)
def hole_diameters(in_c, interior, ptr, nbr, coords, out):
    """Largest l-infinity extent of a component of interior sites outside C, per row."""
    m, n = in_c.shape
    d = coords.shape[1]
    seen = np.empty(n, np.bool_)
    stack = np.empty(n, np.int64)
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    for r in range(m):
        for i in range(n):
            seen[i] = False
        best = 0
        for x0 in range(n):
            if seen[x0] or not interior[x0] or in_c[r, x0]:
                continue
            seen[x0] = True
            top = 0
            stack[top] = x0
            top += 1
            for a in range(d):
                lo[a] = coords[x0, a]
                hi[a] = coords[x0, a]
            while top > 0:
                top -= 1
                x = stack[top]
                for a in range(d):
                    lo[a] = min(lo[a], coords[x, a])
                    hi[a] = max(hi[a], coords[x, a])
                for q in range(ptr[x], ptr[x + 1]):
                    y = nbr[q]
                    if not seen[y] and interior[y] and not in_c[r, y]:
                        seen[y] = True
                        stack[top] = y
                        top += 1
            ext = 0
            for a in range(d):
                ext = max(ext, hi[a] - lo[a] + 1)
            best = max(best, ext)
        out[r] = best

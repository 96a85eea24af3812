"""Compiled inner loops for the per-round game (numba when available)."""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not args or not callable(args[0]) else args[0]


@njit(cache=True)
def _gauss_solve(M, b, out, pivot_tol):
    """Solve M x = b in place by partial pivoting; False when (near) singular."""
    n = M.shape[0]
    for col in range(n):
        piv = col
        big = abs(M[col, col])
        for r in range(col + 1, n):
            if abs(M[r, col]) > big:
                big = abs(M[r, col])
                piv = r
        if big < pivot_tol:
            return False
        if piv != col:
            for k in range(n):
                tmp = M[col, k]
                M[col, k] = M[piv, k]
                M[piv, k] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for r in range(col + 1, n):
            f = M[r, col] / M[col, col]
            if f != 0.0:
                for k in range(col, n):
                    M[r, k] -= f * M[col, k]
                b[r] -= f * b[col]
    for r in range(n - 1, -1, -1):
        acc = b[r]
        for k in range(r + 1, n):
            acc -= M[r, k] * out[k]
        out[r] = acc / M[r, r]
    return True


@njit(cache=True)
def _certify(C, s, psi, y):
    K, d = C.shape
    upper = 0.0
    for k in range(K):
        upper += psi[k] * s[k]
    for i in range(d):
        B = 0.0
        for k in range(K):
            B += psi[k] * C[k, i]
        if B < 0.0:
            upper -= B
    lower = np.inf
    for k in range(K):
        v = s[k]
        for i in range(d):
            v -= C[k, i] * y[i]
        if v < lower:
            lower = v
    return upper, min(lower, upper)


@njit(cache=True)
def solve_bases(C, s, combos, tol):
    """max z s.t. z + c_k . y <= s_k, 0 <= y <= 1 over enumerated bases.

    Works on the problem rescaled to unit magnitude. Returns (found, psi, y,
    upper, lower) with the certificate computed on the original scale.
    """
    K, d = C.shape
    n = d + 1
    m = K + 2 * d
    scale = 0.0
    for k in range(K):
        scale = max(scale, abs(s[k]))
        for i in range(d):
            scale = max(scale, abs(C[k, i]))
    psi = np.zeros(K)
    y = np.zeros(d)
    if scale == 0.0:
        psi[0] = 1.0
        return True, psi, y, 0.0, 0.0
    normals = np.zeros((m, n))
    rhs = np.zeros(m)
    for k in range(K):
        normals[k, 0] = 1.0
        for i in range(d):
            normals[k, i + 1] = C[k, i] / scale
        rhs[k] = s[k] / scale
    for i in range(d):
        normals[K + i, i + 1] = -1.0
        normals[K + d + i, i + 1] = 1.0
        rhs[K + d + i] = 1.0
    nc = combos.shape[0]
    xs = np.empty((nc, n))
    good = np.zeros(nc, dtype=np.bool_)
    M = np.empty((n, n))
    b = np.empty(n)
    x = np.empty(n)
    best = -np.inf
    for c in range(nc):
        for r in range(n):
            j = combos[c, r]
            for k in range(n):
                M[r, k] = normals[j, k]
            b[r] = rhs[j]
        if not _gauss_solve(M, b, x, 1e-10):
            continue
        feasible = True
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += normals[j, k] * x[k]
            if acc > rhs[j] + tol:
                feasible = False
                break
        if feasible:
            good[c] = True
            xs[c] = x
            if x[0] > best:
                best = x[0]
    if best == -np.inf:
        return False, psi, y, np.inf, -np.inf
    lam = np.empty(n)
    for c in range(nc):
        if not good[c] or xs[c, 0] < best - tol:
            continue
        for r in range(n):
            j = combos[c, r]
            for k in range(n):
                M[k, r] = normals[j, k]
            b[r] = 0.0
        b[0] = 1.0
        if not _gauss_solve(M, b, lam, 1e-10):
            continue
        dual_ok = True
        for r in range(n):
            if lam[r] < -tol:
                dual_ok = False
                break
        if not dual_ok:
            continue
        total = 0.0
        for r in range(n):
            j = combos[c, r]
            if j < K and lam[r] > 0.0:
                psi[j] += lam[r]
                total += lam[r]
        if total <= 0.0:
            psi[:] = 0.0
            continue
        for k in range(K):
            psi[k] /= total
        for i in range(d):
            y[i] = min(1.0, max(0.0, xs[c, i + 1]))
        upper, lower = _certify(C, s, psi, y)
        return True, psi, y, upper, lower
    return False, psi, y, np.inf, -np.inf


@njit(cache=True)
def group_rows(G, eta, base_idx, active_idx, points, members, counts):
    """Coefficient row of each response group and its cheapest grid point.

    ``G`` holds the plus-expert biases (|E|, d). Group g fires the events
    ``base_idx[g, n] + s`` for every agent n with ``base_idx[g, n] >= 0`` and
    every active subsequence offset s. ``members[g, :counts[g]]`` lists the
    grid points in the group. Returns (rows (n_groups, d), reps, costs, D)
    where D is q(plus) - q(minus) per (event, coordinate).
    """
    n_events, d = G.shape
    h_max = 0.0
    for e in range(n_events):
        for i in range(d):
            h_max = max(h_max, abs(0.5 * eta * G[e, i]))
    D = np.empty((n_events, d))
    total = 0.0
    for e in range(n_events):
        for i in range(d):
            h = 0.5 * eta * G[e, i]
            up = np.exp(h - h_max)
            down = np.exp(-h - h_max)
            D[e, i] = up - down
            total += up + down
    for e in range(n_events):
        for i in range(d):
            D[e, i] /= total
    n_groups, n_agents = base_idx.shape
    rows = np.zeros((n_groups, d))
    reps = np.empty(n_groups, dtype=np.int64)
    costs = np.empty(n_groups)
    for g in range(n_groups):
        for n in range(n_agents):
            base = base_idx[g, n]
            if base < 0:
                continue
            for s in active_idx:
                for i in range(d):
                    rows[g, i] += D[base + s, i]
        best = np.inf
        arg = -1
        for m in range(counts[g]):
            k = members[g, m]
            v = 0.0
            for i in range(d):
                v += rows[g, i] * points[k, i]
            if v < best:
                best = v
                arg = k
        reps[g] = arg
        costs[g] = best
    return rows, reps, costs, D

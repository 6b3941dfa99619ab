"""Independent oracles used by the test suite.

Each of these re-derives an answer by a different route than the library
(finite differences, constraint-pattern enumeration, lattice dynamic
programming, naive rescanning) so the comparisons in the tests are real.
"""

import itertools

import numpy as np


def finite_difference_gradient(oracle, w, step: float = 1e-5) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    grad = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = step
        grad[i] = (oracle.value(w + e) - oracle.value(w - e)) / (2 * step)
    return grad


def qp_slab_projection(u, A, slabs, tol: float = 1e-9) -> np.ndarray:
    """Exact A-norm projection onto an intersection of slabs.

    Enumerates every active-side pattern in {inactive, +C, -C}^K and solves
    the equality-constrained quadratic program in closed form, keeping the
    KKT-consistent candidate.  Exponential in the slab count, which is fine
    for the small instances tests use.
    """
    u = np.asarray(u, dtype=float)
    A = np.asarray(A, dtype=float)
    Ainv = np.linalg.inv(A)
    best = None
    for pattern in itertools.product((0, 1, -1), repeat=len(slabs)):
        rows, rhs = [], []
        for sigma, slab in zip(pattern, slabs):
            if sigma != 0:
                rows.append(sigma * slab.normal)
                rhs.append(slab.radius)
        if rows:
            B = np.vstack(rows)
            c = np.asarray(rhs)
            M = B @ Ainv @ B.T
            try:
                mu = np.linalg.solve(M, B @ u - c)
            except np.linalg.LinAlgError:
                continue
            if np.any(mu < -tol):
                continue
            w = u - Ainv @ B.T @ mu
        else:
            w = u.copy()
        feasible = all(
            abs(float(slab.normal @ w)) <= slab.radius + tol for slab in slabs
        )
        if not feasible:
            continue
        obj = 0.5 * float((w - u) @ A @ (w - u))
        if best is None or obj < best[0] - tol:
            best = (obj, w)
    assert best is not None, "no KKT-consistent pattern found"
    return best[1]


def grid_offline_optimum(targets, scales, budget_per_step, step: float = 0.05):
    """Exact optimum of the budgeted program over the grid {-1, -0.95, ..., 1}.

    Dynamic program over (previous two levels, budget spent), all in integer
    lattice units, so it returns exactly the value exhaustive enumeration
    of the grid would (validated against brute force on short horizons).
    """
    y = np.asarray(targets, dtype=float).ravel()
    c = np.asarray(scales, dtype=float).ravel()
    n = y.size
    levels = np.arange(-20, 21)
    L = levels.size
    cost = (levels[None, :] * step - y[:, None]) ** 2 / (2.0 * c[:, None])
    cap = int(np.floor(budget_per_step / step + 1e-9))

    INF = np.inf
    dp = np.full((L, L, cap + 1), INF)
    dp[:, :, 0] = cost[0][:, None] + cost[1][None, :]
    i1g, i2g = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    for t in range(2, n):
        new = np.full((L, L, cap + 1), INF)
        for i3 in range(L):
            # Lattice units of the second difference for every (i1, i2).
            dunits = np.abs(i3 - 2 * i2g + i1g)
            for used in range(cap + 1):
                vals = dp[:, :, used]
                new_used = used + dunits
                ok = (new_used <= cap) & np.isfinite(vals)
                if not ok.any():
                    continue
                np.minimum.at(
                    new, (i2g[ok], np.full(int(ok.sum()), i3), new_used[ok]),
                    vals[ok] + cost[t, i3],
                )
        dp = new
    return float(dp.min())


def brute_force_grid_optimum(targets, scales, budget_per_step, step: float = 0.05):
    """Literal enumeration of the grid; only for very short horizons."""
    y = np.asarray(targets, dtype=float).ravel()
    c = np.asarray(scales, dtype=float).ravel()
    n = y.size
    levels = np.arange(-20, 21) * step
    grids = np.meshgrid(*[levels] * n, indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    tv = np.abs(np.diff(u, 2, axis=1)).sum(axis=1)
    obj = ((u - y) ** 2 / (2.0 * c)).sum(axis=1)
    feasible = tv <= budget_per_step + 1e-12
    return float(obj[feasible].min())


def naive_greedy_partition(u):
    """Quadratic-time restatement of the greedy binning rule."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n = u.shape[0]

    def tv(a, b):
        if b - a + 1 < 3:
            return 0.0
        seg = u[a : b + 1]
        return float(np.abs(seg[2:] - 2 * seg[1:-1] + seg[:-2]).sum())

    bins = []
    a = 0
    while a < n:
        b = a
        while b + 1 < n and tv(a, b + 1) <= 1.0 / (b + 1 - a + 1) ** 1.5:
            b += 1
        bins.append((a, b))
        a = b + 1
    return bins

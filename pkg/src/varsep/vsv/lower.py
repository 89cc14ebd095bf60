"""Convex quadratic over the probability simplex.

Minimises ``r + p^T G p - 2 v^T p`` subject to ``p >= 0, sum(p) = 1``.
A primal active-set method does the work; accelerated projected gradient
is the fallback when the working-set systems misbehave (noisy shot-mode
caches).  Optimality is certified by the Frank-Wolfe gap
``g^T p - min(g)``, an upper bound on ``f(p) - f*``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ensemble import OverlapCache


@dataclass(frozen=True)
class LowerSolution:
    p: np.ndarray
    value: float
    kkt_residual: float
    iterations: int
    converged: bool


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, x.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(x - css[rho] / (rho + 1), 0.0)


def kkt_gap(G: np.ndarray, v: np.ndarray, p: np.ndarray) -> float:
    g = 2.0 * (G @ p - v)
    return max(0.0, float(g @ p - g.min()))


def _psd_part(G: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (G + G.T))
    if w[0] >= -1e-12:
        return G
    return (U * np.maximum(w, 0.0)) @ U.T


def _active_set(G, v, p, tol, max_iter):
    s = v.size
    free = p > 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(free)
        k = idx.size
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * G[np.ix_(idx, idx)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.append(2.0 * v[idx], 1.0)
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        if np.abs(kkt @ sol - rhs).max() > 1e-9:
            return p, it, False
        x = sol[:k]
        if np.all(x >= -1e-15):
            p = np.zeros(s)
            p[idx] = np.maximum(x, 0.0)
            p /= p.sum()
            g = 2.0 * (G @ p - v)
            level = g[idx].min() if k else 0.0
            mult = g - level
            mult[idx] = np.inf
            j = int(np.argmin(mult))
            if mult[j] >= -tol:
                return p, it, True
            free[j] = True
            continue
        d = x - p[idx]
        neg = d < 0
        steps = -p[idx][neg] / d[neg]
        alpha = min(1.0, float(steps.min()))
        p = p.copy()
        p[idx] = p[idx] + alpha * d
        blocked = idx[neg][steps <= alpha + 1e-15]
        p[blocked] = 0.0
        p = np.maximum(p, 0.0)
        p /= p.sum()
        free = free.copy()
        free[blocked] = False
        if not free.any():
            return p, it, False
    return p, max_iter, False


def _projected_gradient(G, v, p, tol, max_iter):
    lipschitz = 2.0 * max(np.linalg.eigvalsh(G)[-1], 1e-12)
    step = 1.0 / lipschitz
    y, x_prev, t = p.copy(), p.copy(), 1.0
    for it in range(1, max_iter + 1):
        x = project_simplex(y - step * 2.0 * (G @ y - v))
        if kkt_gap(G, v, x) <= tol:
            return x, it, True
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = x + ((t - 1) / t_next) * (x - x_prev)
        x_prev, t = x, t_next
    return x_prev, max_iter, False


def lower_solve(
    cache: OverlapCache,
    tolerance: float = 1e-10,
    p0: np.ndarray | None = None,
    max_iter: int | None = None,
) -> LowerSolution:
    """Optimal mixing probabilities for a fixed set of product states.

    ``p0`` warm-starts the active set (its support seeds the working set).
    If the iteration cap is hit the best feasible point is returned with
    ``converged=False``.
    """
    G = np.asarray(cache.G, dtype=float)
    v = np.asarray(cache.v, dtype=float)
    s = v.size
    if s == 1:
        p = np.ones(1)
        return LowerSolution(p, cache.r + float(G[0, 0]) - 2 * float(v[0]), 0.0, 0, True)
    Gs = _psd_part(G)
    max_iter = max_iter or 10 * s + 50

    if p0 is None or np.asarray(p0).size != s:
        start = np.zeros(s)
        start[int(np.argmin(np.diag(Gs) - 2 * v))] = 1.0
    else:
        start = np.maximum(np.asarray(p0, dtype=float), 0.0)
        start = start / start.sum() if start.sum() > 0 else np.full(s, 1.0 / s)

    p, iters, ok = _active_set(Gs, v, start, tolerance * 1e-2, max_iter)
    gap = kkt_gap(Gs, v, p)
    if not ok or gap > tolerance:
        q, more, ok2 = _projected_gradient(Gs, v, p, tolerance, 50 * max_iter)
        iters += more
        if kkt_gap(Gs, v, q) < gap:
            p, gap = q, kkt_gap(Gs, v, q)
        ok = ok2 or gap <= tolerance
    value = cache.r + float(p @ G @ p) - 2.0 * float(v @ p)
    return LowerSolution(p=p, value=value, kkt_residual=gap, iterations=iters, converged=bool(ok and gap <= tolerance))

"""Analytic and KKT-certified reference values for GHZ and X-MEMS states.

The conjectured CSS of the n-qubit X-MEMS is an X-pattern with weight
``a/2`` on both corners, ``b/(N-1)`` on diagonal slots ``1..N-1``,
``c/(N-1)`` with ``c = 1-a-b`` on slots ``N..2N-2`` and ``delta`` on the
anti-diagonal corners (``N = 2**(n-1)``).  Its distance to the X-MEMS
``X(gamma)`` with weights ``f`` (corners) and ``g`` is::

    D = 2 (f - a/2)^2 + 2 |gamma - delta|^2
        + (N-1) (g - b/(N-1))^2 + c^2 / (N-1)

and separability of the pattern reduces to ``|delta|^2 (N-1)^2 <= b c``.
``D`` is strictly convex and the feasible set is a rotated second-order
cone intersected with a simplex, so any KKT point is the global optimum.
The phase of ``delta`` only enters through ``Re(delta* gamma)`` and is
therefore aligned with gamma's, leaving the real variables ``(a, b, t)``
with ``t = |delta|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize, nnls

from .qstate import as_matrix, partial_transpose, xmems_weights

KKT_TOLERANCE = 1e-9


class ReferenceSolveError(RuntimeError):
    """The constrained CSS solve could not be certified."""


@dataclass(frozen=True)
class XmemsCssParams:
    a: float
    b: float
    delta: complex
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def c(self) -> float:
        return 1.0 - self.a - self.b

    @property
    def blocks(self) -> int:
        return 1 << (self.n - 1)

    def separability_margin(self) -> float:
        """``b c - (N-1)^2 |delta|^2``; non-negative on the separable side."""
        m = self.blocks - 1
        return self.b * self.c - m * m * abs(self.delta) ** 2

    def is_feasible(self, tol: float = 1e-12) -> bool:
        return (
            -tol <= self.a <= 1 + tol
            and -tol <= self.b <= 1 + tol
            and self.c >= -tol
            and abs(self.delta) <= self.a / 2 + tol
            and self.separability_margin() >= -tol
        )


class CssSolution(NamedTuple):
    params: XmemsCssParams
    hse: float
    kkt_residual: float = 0.0


def _check_gamma(gamma) -> complex:
    g = complex(gamma)
    if abs(g) > 0.5 + 1e-15:
        raise ValueError(f"|gamma| = {abs(g)} exceeds 1/2")
    return g


def _phase(gamma: complex) -> complex:
    return gamma / abs(gamma) if abs(gamma) > 0 else 1.0


def ghz_hse(n: int) -> float:
    if n < 2:
        raise ValueError("GHZ states need n >= 2")
    return (2.0**n - 2.0) / (2.0 ** (n + 1) + 2.0 ** (3 - n) - 4.0)


def css_matrix(params: XmemsCssParams) -> np.ndarray:
    """Dense matrix of the X-pattern separable state."""
    n, N = params.n, params.blocks
    d = 1 << n
    diag = np.zeros(d)
    diag[0] = diag[-1] = params.a / 2
    diag[1:N] = params.b / (N - 1)
    diag[N : 2 * N - 1] = params.c / (N - 1)
    m = np.diag(diag).astype(complex)
    m[0, -1] = params.delta
    m[-1, 0] = np.conj(params.delta)
    return m


def pattern_distance(n: int, gamma, a: float, b: float, delta) -> float:
    """Hilbert-Schmidt distance between X(gamma) and the CSS pattern."""
    gamma = complex(gamma)
    f, g = xmems_weights(n, gamma)
    M = (1 << (n - 1)) - 1
    c = 1.0 - a - b
    return 2 * (f - a / 2) ** 2 + 2 * abs(gamma - delta) ** 2 + M * (g - b / M) ** 2 + c * c / M


def xmems_css_2q(gamma) -> CssSolution:
    """Closed-form two-qubit CSS of the X-MEMS."""
    gamma = _check_gamma(gamma)
    x = abs(gamma)
    if x <= 1.0 / 3.0:
        q = math.sqrt(1.0 + 36.0 * x * x)
        a = (7.0 - q) / 9.0
        b = (1.0 + 12.0 * x * x + q) / (6.0 * q)
        delta = (gamma / 3.0) * (1.0 + 2.0 / q)
        hse = (2.0 / 27.0) * (1.0 + 18.0 * x * x - q)
    else:
        S = math.sqrt(1.0 - 4.0 * x + 8.0 * x * x)
        a = (1.0 + 4.0 * x - S) / 3.0
        b = (3.0 - 6.0 * x + (3.0 - 12.0 * x + 16.0 * x * x) / S) / 6.0
        delta = gamma * (2.0 - 4.0 * x + S) / (3.0 * S)
        hse = (2.0 / 3.0) * (1.0 - 4.0 * x + 6.0 * x * x + (2.0 * x - 1.0) * S)
    return CssSolution(XmemsCssParams(a, b, complex(delta), 2), hse)


# --- n-qubit numeric solve -------------------------------------------------


def _objective_terms(n: int, gamma: complex):
    f, g = xmems_weights(n, gamma)
    M = float((1 << (n - 1)) - 1)
    x = abs(gamma)

    def D(z):
        a, b, t = z
        c = 1.0 - a - b
        return 2 * (f - a / 2) ** 2 + 2 * (x - t) ** 2 + M * (g - b / M) ** 2 + c * c / M

    def grad(z):
        a, b, t = z
        c = 1.0 - a - b
        return np.array([a - 2 * f - 2 * c / M, 2 * b / M - 2 * g - 2 * c / M, 4 * t - 4 * x])

    hess = np.array([[1 + 2 / M, 2 / M, 0.0], [2 / M, 4 / M, 0.0], [0.0, 0.0, 4.0]])
    return D, grad, hess, M


def _constraints(z, M):
    """Inequality constraint values ``g_k(z) >= 0`` and their gradients."""
    a, b, t = z
    c = 1.0 - a - b
    vals = np.array([a, b, c, t, a / 2 - t, b * c - M * M * t * t])
    grads = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [-1.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.0, -1.0],
            [-b, c - b, -2.0 * M * M * t],
        ]
    )
    return vals, grads


def kkt_residual(n: int, gamma, params: XmemsCssParams, active_tol: float = 1e-9) -> float:
    """Stationarity plus feasibility residual of ``params`` for the pattern problem.

    Multipliers for the active constraints are fitted by non-negative least
    squares, so a small value certifies a KKT point.
    """
    gamma = _check_gamma(gamma)
    _, grad, _, M = _objective_terms(n, gamma)
    z = np.array([params.a, params.b, abs(params.delta)])
    vals, grads = _constraints(z, M)
    infeas = float(np.maximum(-vals, 0.0).max())
    active = vals <= active_tol
    gD = grad(z)
    if not active.any():
        return max(float(np.linalg.norm(gD)), infeas)
    _, res = nnls(grads[active].T, gD)
    phase_err = 0.0
    if abs(gamma) > 0 and abs(params.delta) > 0:
        phase_err = abs(params.delta / abs(params.delta) - _phase(gamma))
    return max(float(res), infeas, phase_err)


def _newton_cone(z, mu, grad, hess, M, iters=50):
    """Newton iteration on stationarity with the cone constraint active."""
    for _ in range(iters):
        a, b, t = z
        c = 1.0 - a - b
        h = b * c - M * M * t * t
        gh = np.array([-b, c - b, -2.0 * M * M * t])
        Hh = np.array([[0.0, -1.0, 0.0], [-1.0, -2.0, 0.0], [0.0, 0.0, -2.0 * M * M]])
        F = np.append(grad(z) - mu * gh, h)
        if np.abs(F).max() < 1e-15:
            break
        J = np.zeros((4, 4))
        J[:3, :3] = hess - mu * Hh
        J[:3, 3] = -gh
        J[3, :3] = gh
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        z = z + step[:3]
        mu = mu + step[3]
    return z, mu


def xmems_css_nq(n: int, gamma, starts: int = 8, seed: int = 0) -> CssSolution:
    """KKT-certified CSS of the n-qubit X-MEMS within the conjectured pattern."""
    if n == 2:
        sol = xmems_css_2q(gamma)
        return CssSolution(sol.params, sol.hse, kkt_residual(2, gamma, sol.params))
    if n < 2:
        raise ValueError("n must be at least 2")
    gamma = _check_gamma(gamma)
    D, grad, hess, M = _objective_terms(n, gamma)
    f, g = xmems_weights(n, gamma)
    phase = _phase(gamma)

    cons = [
        {"type": "ineq", "fun": lambda z: _constraints(z, M)[0], "jac": lambda z: _constraints(z, M)[1]},
    ]
    rng = np.random.default_rng(seed)
    guesses = [np.array([2 * f, M * g, 0.0]), np.array([1 / 3, 1 / 3, 0.0])]
    guesses += [np.append(rng.dirichlet(np.ones(3))[:2], 0.0) for _ in range(max(0, starts - 2))]

    best = None
    for z0 in guesses:
        res = minimize(
            D,
            z0,
            jac=grad,
            method="SLSQP",
            bounds=[(0, 1), (0, 1), (0, 0.5)],
            constraints=cons,
            options={"ftol": 1e-15, "maxiter": 500},
        )
        z = np.asarray(res.x, dtype=float)
        vals, grads = _constraints(z, M)
        # polish on the cone when it is the only binding constraint
        if vals[5] < 1e-8 and np.all(vals[:5] > 1e-8):
            mu = float(nnls(grads[5:].T, grad(z))[0][0])
            zn, mun = _newton_cone(z.copy(), mu, grad, hess, M)
            if mun >= 0 and np.all(_constraints(zn, M)[0][:5] > 0):
                z = zn
        a, b, t = z
        # clip round-off onto the feasible side
        t = min(max(t, 0.0), math.sqrt(max(b * (1 - a - b), 0.0)) / M, a / 2)
        params = XmemsCssParams(float(a), float(b), complex(t * phase), n)
        resid = kkt_residual(n, gamma, params)
        cand = CssSolution(params, pattern_distance(n, gamma, params.a, params.b, params.delta), resid)
        if best is None or (cand.kkt_residual, cand.hse) < (best.kkt_residual, best.hse):
            best = cand
        if best.kkt_residual <= KKT_TOLERANCE:
            break
    if best.kkt_residual > KKT_TOLERANCE:
        raise ReferenceSolveError(f"KKT residual {best.kkt_residual:.3e} above {KKT_TOLERANCE} for n={n}, gamma={gamma}")
    return best


def xmems_hse(n: int, gamma) -> float:
    return xmems_css_nq(n, gamma).hse


def xmems_hse_bound(gamma) -> float:
    return 2.0 * abs(complex(gamma)) ** 2


# --- entanglement measures -------------------------------------------------

_SY2 = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])


def concurrence_2q(rho) -> float:
    """Wootters concurrence of a two-qubit state."""
    m = as_matrix(rho)
    if m.shape != (4, 4):
        raise ValueError("concurrence_2q needs a two-qubit state")
    tilde = _SY2 @ m.conj() @ _SY2
    ev = np.sort(np.sqrt(np.clip(np.real(np.linalg.eigvals(m @ tilde)), 0.0, None)))[::-1]
    return float(max(0.0, ev[0] - ev[1] - ev[2] - ev[3]))


def gme_concurrence_xmems(gamma) -> float:
    return 2.0 * abs(_check_gamma(gamma))


def negativity(rho, qubit: int = 0) -> float:
    w = np.linalg.eigvalsh(partial_transpose(rho, qubit))
    return float(-w[w < 0].sum())


def css_pattern_negative_eigenvalue(params: XmemsCssParams) -> float:
    """The only eigenvalue of the single-qubit partial transpose that can go negative (n = 3)."""
    if params.n != 3:
        raise ValueError("closed form is specific to three qubits")
    a, b, d = params.a, params.b, abs(params.delta)
    return (1.0 - a - math.sqrt((1.0 - a - 2.0 * b) ** 2 + 36.0 * d * d)) / 6.0


def reference_hse(state: str, n: int, gamma=None) -> float | None:
    """Analytic HSE for the named state family, or None when unknown."""
    if state == "ghz":
        return ghz_hse(n)
    if state == "xmems":
        return xmems_css_nq(n, gamma).hse
    return None

"""Entanglement witness from an approximate closest separable state.

With ``X = rho - sigma`` and ``offset = max <psi|X|psi>`` over product
states, ``W = offset * I - X`` has a non-negative expectation on every
product state (hence on every separable state) while ``Tr(W rho)`` equals
``-Tr[(rho - sigma)^2]`` when ``sigma`` is the exact CSS.

The maximum over product states is not convex; it is approximated by
alternating single-qubit eigenvector updates from random starts, so the
returned offset is a lower bound on the true value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from ..qstate import as_matrix, num_qubits
from ..swap_test import make_rng


@dataclass(frozen=True)
class Witness:
    W: np.ndarray
    offset: float
    value: float
    maximizer: np.ndarray
    starts: int
    offset_is_lower_bound: bool = True

    def expectation(self, state) -> float:
        arr = np.asarray(state)
        if arr.ndim == 1:
            return float(np.real(np.vdot(arr, self.W @ arr)))
        return float(np.real(np.sum(self.W * as_matrix(state).T)))


def _kron_all(vectors):
    return reduce(np.kron, vectors, np.ones(1, dtype=complex))


def _local_operator(X: np.ndarray, factors: list, j: int) -> np.ndarray:
    left = _kron_all(factors[:j])
    right = _kron_all(factors[j + 1 :])
    t = X.reshape(left.size, 2, right.size, left.size, 2, right.size)
    return np.einsum("i,k,ixkjyl,j,l->xy", left.conj(), right.conj(), t, left, right)


def product_expectation_max(X: np.ndarray, rng, starts: int = 20, sweeps: int = 200, tol: float = 1e-13):
    """Approximate ``max <psi|X|psi>`` over product states; returns ``(value, psi)``."""
    X = 0.5 * (X + X.conj().T)
    n = num_qubits(X.shape[0])
    best_val, best_psi = -np.inf, None
    for _ in range(starts):
        factors = []
        for _ in range(n):
            z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            factors.append(z / np.linalg.norm(z))
        val = -np.inf
        for _ in range(sweeps):
            prev = val
            for j in range(n):
                w, U = np.linalg.eigh(_local_operator(X, factors, j))
                factors[j] = U[:, -1]
                val = float(w[-1])
            if val - prev <= tol:
                break
        if val > best_val:
            best_val, best_psi = val, _kron_all(factors)
    return best_val, best_psi


def build_witness(rho, sigma, budget: int = 20, rng=None) -> Witness:
    """Witness ``offset * I - (rho - sigma)``; ``budget`` is the number of random starts."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = make_rng(0) if rng is None else make_rng(rng)
    X = a - b
    offset, psi = product_expectation_max(X, rng, starts=budget)
    W = offset * np.eye(a.shape[0]) - X
    value = float(np.real(np.sum(W * a.T)))
    return Witness(W=W, offset=offset, value=value, maximizer=psi, starts=budget)

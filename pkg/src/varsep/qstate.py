"""Dense state vectors and density matrices for small qubit registers.

Qubit 0 is the most significant bit of a basis-state index, so the
amplitude of ``|q0 q1 ... q_{n-1}>`` sits at ``int("q0q1...", 2)``.
Every tensor operation in the package follows this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10


class StateError(ValueError):
    """Raised when an array does not describe a valid quantum state."""


def num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise StateError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class PureState:
    """Normalised state vector on ``n`` qubits."""

    amplitudes: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        n = num_qubits(amps.size)
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > NORM_TOL * max(1, amps.size):
            raise StateError(f"state norm {norm!r} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "n", n)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix on ``n`` qubits.

    Validation runs on construction; pass ``validate=False`` only for
    matrices that are valid by construction (e.g. convex mixtures).
    """

    entries: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)
    n: int = field(init=False)

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateError(f"expected a square matrix, got shape {m.shape}")
        n = num_qubits(m.shape[0])
        if self.validate:
            _check_density(m)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "n", n)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.entries, self.entries)))


def _check_density(m: np.ndarray) -> None:
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.conj().T).max() > HERMITIAN_TOL * scale:
        raise StateError("matrix is not Hermitian")
    tr = np.trace(m)
    if abs(tr - 1.0) > TRACE_TOL * max(1, m.shape[0]):
        raise StateError(f"trace {tr!r} differs from 1")
    lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lo < PSD_TOL:
        raise StateError(f"minimum eigenvalue {lo!r} is negative")


def as_density(state) -> DensityMatrix:
    """Coerce a DensityMatrix, PureState, state vector or matrix."""
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, PureState):
        return state.density()
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return PureState(arr).density()
    return DensityMatrix(arr)


def as_matrix(state) -> np.ndarray:
    """Raw complex matrix of any accepted state representation."""
    if isinstance(state, DensityMatrix):
        return state.entries
    if isinstance(state, PureState):
        a = state.amplitudes
        return np.outer(a, a.conj())
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    return arr


@dataclass(frozen=True)
class ProductStateParams:
    """Angles of one product state: qubit ``j`` is cos(t_j)|0> + e^{i f_j} sin(t_j)|1>."""

    thetas: np.ndarray
    phis: np.ndarray

    def __post_init__(self):
        t = np.mod(np.asarray(self.thetas, dtype=float).ravel(), TWO_PI)
        f = np.mod(np.asarray(self.phis, dtype=float).ravel(), TWO_PI)
        if t.shape != f.shape or t.size == 0:
            raise ValueError("thetas and phis must be non-empty and of equal length")
        t.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "thetas", t)
        object.__setattr__(self, "phis", f)

    @property
    def n(self) -> int:
        return self.thetas.size


def qubit_factors(thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Single-qubit amplitude pairs, shape ``thetas.shape + (2,)``."""
    thetas = np.asarray(thetas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    return np.stack([np.cos(thetas) + 0j, np.exp(1j * phis) * np.sin(thetas)], axis=-1)


def product_vectors(thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Product state vectors for a batch of angle rows.

    ``thetas`` and ``phis`` have shape ``(s, n)``; the result has shape
    ``(s, 2**n)`` with row ``i`` the tensor product of the factors of row ``i``.
    """
    factors = qubit_factors(np.atleast_2d(thetas), np.atleast_2d(phis))
    s, n, _ = factors.shape
    out = factors[:, 0, :]
    for j in range(1, n):
        out = (out[:, :, None] * factors[:, j, None, :]).reshape(s, -1)
    return out


def build_product_state(params: ProductStateParams) -> PureState:
    return PureState(product_vectors(params.thetas[None], params.phis[None])[0])


def basis_state(bits: str) -> PureState:
    v = np.zeros(1 << len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return PureState(v)


def build_ghz(n: int) -> PureState:
    if n < 2:
        raise ValueError("GHZ state needs at least two qubits")
    v = np.zeros(1 << n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return PureState(v)


def xmems_weights(n: int, gamma: complex) -> tuple[float, float]:
    """Corner and block diagonal weights ``(f, g)`` of the n-qubit X-MEMS."""
    if n < 2:
        raise ValueError("X-MEMS needs at least two qubits")
    mag = abs(gamma)
    if mag > 0.5 + 1e-15:
        raise ValueError(f"|gamma| = {mag} exceeds 1/2")
    half = 1 << (n - 1)
    if mag <= 1 / (half + 1):
        return 1 / (half + 1), 1 / (half + 1)
    return mag, (1 - 2 * mag) / (half - 1)


def build_xmems(n: int, gamma: complex) -> DensityMatrix:
    """Maximally entangled mixed X-state on ``n`` qubits.

    Diagonal: ``f`` on |0..0> and |1..1>, ``g`` on the ``N - 1`` indices
    following |0..0>, zero on the remaining ``N - 1``; ``gamma`` couples
    the two corners. ``N = 2**(n-1)``.
    """
    f, g = xmems_weights(n, gamma)
    d = 1 << n
    half = d // 2
    m = np.zeros((d, d), dtype=complex)
    m[0, 0] = m[-1, -1] = f
    m[np.arange(1, half), np.arange(1, half)] = g
    m[0, -1] = gamma
    m[-1, 0] = np.conj(gamma)
    return DensityMatrix(m)


def _check_qubit(n: int, qubit: int) -> None:
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")


def partial_transpose(rho, qubit: int) -> np.ndarray:
    """Transpose the indices of one qubit; returns a plain Hermitian matrix."""
    m = as_matrix(rho)
    n = num_qubits(m.shape[0])
    _check_qubit(n, qubit)
    t = m.reshape((2,) * (2 * n))
    t = np.swapaxes(t, qubit, n + qubit)
    return t.reshape(m.shape)


def partial_trace(rho, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the qubits in ``keep`` (kept in ascending order)."""
    m = as_matrix(rho)
    n = num_qubits(m.shape[0])
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must name at least one qubit")
    for k in keep:
        _check_qubit(n, k)
    drop = [q for q in range(n) if q not in keep]
    t = m.reshape((2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for q in drop:
        col[q] = row[q]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = 1 << len(keep)
    return DensityMatrix(reduced.reshape(dk, dk), validate=False)


def hsd_exact(rho, sigma) -> float:
    """Hilbert-Schmidt distance Tr[(rho - sigma)^2]."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return max(0.0, float(np.real(np.vdot(diff, diff))))


def random_pure_state(n: int, rng: np.random.Generator) -> PureState:
    v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return PureState(v / np.linalg.norm(v))


def random_density_matrix(n: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Dirichlet-weighted mixture of Haar-random pure states (full rank by default)."""
    k = (1 << n) if rank is None else rank
    vecs = rng.standard_normal((k, 1 << n)) + 1j * rng.standard_normal((k, 1 << n))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    w = rng.dirichlet(np.ones(k))
    m = np.einsum("k,ki,kj->ij", w, vecs, vecs.conj())
    return DensityMatrix(0.5 * (m + m.conj().T))


def random_product_params(n: int, rng: np.random.Generator, size: int | None = None):
    """Angles of product states with each qubit uniform on the Bloch sphere.

    Our factor uses cos(theta), so the Bloch polar angle is ``2 * theta``.
    Returns arrays of shape ``(n,)`` or ``(size, n)``.
    """
    shape = (n,) if size is None else (size, n)
    thetas = 0.5 * np.arccos(rng.uniform(-1.0, 1.0, shape))
    phis = rng.uniform(0.0, TWO_PI, shape)
    return thetas, phis


def is_pure(rho, tol: float = 1e-10) -> bool:
    return abs(as_density(rho).purity() - 1.0) <= tol


__all__: Sequence[str] = [
    "DensityMatrix",
    "PureState",
    "ProductStateParams",
    "StateError",
    "as_density",
    "as_matrix",
    "basis_state",
    "build_ghz",
    "build_product_state",
    "build_xmems",
    "hsd_exact",
    "is_pure",
    "num_qubits",
    "partial_trace",
    "partial_transpose",
    "product_vectors",
    "qubit_factors",
    "random_density_matrix",
    "random_product_params",
    "random_pure_state",
    "xmems_weights",
]

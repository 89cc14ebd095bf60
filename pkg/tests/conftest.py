import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def kron_product(thetas, phis):
    """Independent product-state builder: explicit kron of 2-vectors."""
    v = np.array([1.0 + 0j])
    for t, f in zip(thetas, phis):
        v = np.kron(v, np.array([np.cos(t), np.exp(1j * f) * np.sin(t)]))
    return v


def dense_mixture(p, thetas, phis):
    d = 1 << len(thetas[0])
    m = np.zeros((d, d), dtype=complex)
    for w, t, f in zip(p, thetas, phis):
        v = kron_product(t, f)
        m += w * np.outer(v, v.conj())
    return m


def trace_prod(a, b):
    return float(np.real(np.trace(a @ b)))

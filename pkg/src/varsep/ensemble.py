"""Separable trial states as classical mixtures of product states.

The device-side quantities are collected once per angle proposal in an
:class:`OverlapCache`; the HSD for any mixing vector is then assembled
classically::

    D(p) = r + p^T G p - 2 v^T p

with ``r = Tr rho^2``, ``v_i = <psi_i|rho|psi_i>`` and
``G_ij = |<psi_i|psi_j>|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .qstate import DensityMatrix, ProductStateParams, as_matrix, product_vectors, TWO_PI
from .swap_test import ShotConfig, make_rng, sample_overlap

EXACT = "exact"
SHOTS = "shots"
MODES = (EXACT, SHOTS)


def _check_simplex(p: np.ndarray, tol: float = 1e-10) -> None:
    if p.ndim != 1 or p.size == 0:
        raise ValueError("p must be a non-empty vector")
    if np.any(p < -tol) or np.any(p > 1 + tol) or abs(p.sum() - 1.0) > tol:
        raise ValueError("p is not a probability vector")


@dataclass(frozen=True)
class SeparableEnsemble:
    """Mixture ``sum_i p_i |psi_i><psi_i|`` of ``s`` product states on ``n`` qubits."""

    p: np.ndarray
    thetas: np.ndarray
    phis: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        t = np.mod(np.atleast_2d(np.asarray(self.thetas, dtype=float)), TWO_PI)
        f = np.mod(np.atleast_2d(np.asarray(self.phis, dtype=float)), TWO_PI)
        if t.shape != f.shape or t.shape[0] != p.size:
            raise ValueError("p, thetas and phis disagree on the component count")
        _check_simplex(p)
        s, n = t.shape
        if s > 4**n:
            raise ValueError(f"s = {s} exceeds the 4^n = {4**n} cap")
        for arr in (p, t, f):
            arr.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "thetas", t)
        object.__setattr__(self, "phis", f)

    @property
    def s(self) -> int:
        return self.p.size

    @property
    def n(self) -> int:
        return self.thetas.shape[1]

    def component(self, i: int) -> ProductStateParams:
        return ProductStateParams(self.thetas[i], self.phis[i])

    def vectors(self) -> np.ndarray:
        return product_vectors(self.thetas, self.phis)

    @classmethod
    def random(cls, n: int, s: int | None, rng: np.random.Generator) -> "SeparableEnsemble":
        s = (1 << n) if s is None else s
        return cls(
            rng.dirichlet(np.ones(s)),
            rng.uniform(0, TWO_PI, (s, n)),
            rng.uniform(0, TWO_PI, (s, n)),
        )


@dataclass(frozen=True)
class OverlapCache:
    """Everything the classical loop needs from the device for one proposal.

    In shot mode ``v`` and ``G`` hold clamped values; the unclamped
    estimates are kept in ``raw_v``/``raw_G``/``raw_r`` for diagnostics.
    """

    r: float
    v: np.ndarray
    G: np.ndarray
    mode: str = EXACT
    shots: int = 0
    standard_error: float = 0.0
    raw_r: Optional[float] = None
    raw_v: Optional[np.ndarray] = field(default=None, repr=False)
    raw_G: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def s(self) -> int:
        return self.v.size

    @property
    def estimator_calls(self) -> int:
        s = self.s
        return 1 + s + s * (s - 1) // 2


def estimator_calls(s: int) -> int:
    return 1 + s + s * (s - 1) // 2


def exact_cache_arrays(rho_m: np.ndarray, vecs: np.ndarray, r: float | None = None):
    """``(r, v, G)`` from a density matrix and rows of product vectors."""
    if r is None:
        r = float(np.real(np.vdot(rho_m, rho_m)))
    v = np.real(np.einsum("id,de,ie->i", vecs.conj(), rho_m, vecs))
    gram = vecs.conj() @ vecs.T
    G = np.abs(gram) ** 2
    np.fill_diagonal(G, 1.0)
    return r, v, G


def build_cache(
    rho,
    thetas,
    phis,
    mode: str = EXACT,
    cfg: ShotConfig | None = None,
    rng=None,
    r: float | None = None,
) -> OverlapCache:
    """Evaluate ``Tr rho^2``, ``v`` and ``G`` for the product states given by the angle rows.

    ``r`` may be passed in to reuse an earlier purity estimate; the purity
    of the test state does not depend on the proposal.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rho_m = as_matrix(rho)
    vecs = product_vectors(thetas, phis)
    if vecs.shape[1] != rho_m.shape[0]:
        raise ValueError("rho and the product states act on different qubit counts")
    if mode == EXACT:
        r, v, G = exact_cache_arrays(rho_m, vecs, r)
        return OverlapCache(r=r, v=v, G=G)

    cfg = cfg or ShotConfig()
    gen = make_rng(cfg.seed) if rng is None else rng
    s = vecs.shape[0]
    ses = []
    if r is None:
        est = sample_overlap(rho_m, rho_m, cfg, gen)
        r, r_se = est.value, est.standard_error
        ses.append(r_se)
    raw_v = np.empty(s)
    for i in range(s):
        est = sample_overlap(rho_m, vecs[i], cfg, gen)
        raw_v[i] = est.value
        ses.append(est.standard_error)
    raw_G = np.eye(s)
    for i in range(s):
        for j in range(i + 1, s):
            est = sample_overlap(vecs[i], vecs[j], cfg, gen)
            raw_G[i, j] = raw_G[j, i] = est.value
            ses.append(est.standard_error)
    return OverlapCache(
        r=float(np.clip(r, 0.0, 1.0)),
        v=np.clip(raw_v, 0.0, 1.0),
        G=np.clip(raw_G, 0.0, 1.0),
        mode=SHOTS,
        shots=int(cfg.shots),
        standard_error=float(max(ses)) if ses else 0.0,
        raw_r=float(r),
        raw_v=raw_v,
        raw_G=raw_G,
    )


def _check_len(cache: OverlapCache, p) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if p.size != cache.s:
        raise ValueError(f"p has length {p.size}, cache has {cache.s} components")
    return p


def ensemble_overlap(cache: OverlapCache, p) -> float:
    p = _check_len(cache, p)
    return float(p @ cache.v)


def ensemble_purity(cache: OverlapCache, p) -> float:
    p = _check_len(cache, p)
    # diagonal of G is 1, so this is sum p_i^2 + 2 sum_{i<j} p_i p_j G_ij
    return float(p @ cache.G @ p)


def hsd_from_cache(cache: OverlapCache, p) -> float:
    return cache.r + ensemble_purity(cache, p) - 2.0 * ensemble_overlap(cache, p)


def densify(ensemble: SeparableEnsemble) -> DensityMatrix:
    vecs = ensemble.vectors()
    m = np.einsum("k,ki,kj->ij", ensemble.p, vecs, vecs.conj())
    return DensityMatrix(0.5 * (m + m.conj().T), validate=False)

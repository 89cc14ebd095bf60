"""Quantum Gilbert algorithm baseline.

Each trial draws a random pure product state ``sigma``, keeps it only if
the linear functional ``Tr[(sigma - rho_prev)(rho - rho_prev)]`` is
positive, and then mixes it in as ``rho_new = p rho_prev + (1-p) sigma``
with the ``p`` that minimises the Hilbert-Schmidt distance along that
segment.  Purity and overlap of the running mixture are carried by the
recursions::

    P_new = p^2 P + (1-p)^2 + 2 p (1-p) Tr[rho_prev sigma]
    O_new = p O + (1-p) Tr[rho sigma]

so only overlaps with the new candidate are needed per trial.  Every
success adds one product state to the stored list.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .ensemble import EXACT, MODES
from .qstate import as_density, product_vectors, random_product_params
from .swap_test import ShotConfig, make_rng, sample_overlap

DEFAULT_EXPONENT = 0.44127
ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class HaltCriterion:
    """When to stop.  ``stall_window="adaptive"`` means ``10 * (c_s + 1)`` failed trials in a row."""

    max_trials: Optional[int] = None
    max_successes: Optional[int] = None
    min_improvement: Optional[float] = None
    stall_window: Union[int, str, None] = None

    def __post_init__(self):
        sw = self.stall_window
        if sw is not None and sw != ADAPTIVE and (not isinstance(sw, (int, np.integer)) or sw < 1):
            raise ValueError("stall_window must be a positive int, 'adaptive' or None")
        if self.max_trials is None and self.max_successes is None and sw is None:
            raise ValueError("at least one of max_trials, max_successes, stall_window must be finite")
        for name in ("max_trials", "max_successes"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def default(cls, max_trials: int = 100_000) -> "HaltCriterion":
        return cls(max_trials=max_trials, min_improvement=1e-8, stall_window=ADAPTIVE)

    def window(self, successes: int) -> Optional[int]:
        if self.stall_window == ADAPTIVE:
            return 10 * (successes + 1)
        return self.stall_window


@dataclass
class QgaState:
    """Running mixture: component angle rows, mixing weights and cached traces.

    ``weights[k]`` is the ``p`` used when component ``k + 1`` was mixed in;
    component 0 is the starting product state.
    """

    thetas: list
    phis: list
    weights: list
    r: float
    purity: float
    overlap: float
    c_t: int = 0
    c_s: int = 0
    device_calls: int = 0
    dense: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def hsd(self) -> float:
        return self.r + self.purity - 2.0 * self.overlap

    @property
    def n(self) -> int:
        return len(self.thetas[0])

    def vectors(self) -> np.ndarray:
        return product_vectors(np.array(self.thetas), np.array(self.phis))

    def component_count(self) -> int:
        return len(self.thetas)

    def explicit_weights(self) -> np.ndarray:
        return explicit_weights(self.weights)


def explicit_weights(mixing) -> np.ndarray:
    """Convex weights of components ``0..m`` implied by the mixing sequence ``p_1..p_m``.

    ``w_i = (prod_{j>i} p_j) (1 - p_i)`` with ``p_0 = 0``.
    """
    p = np.concatenate([[0.0], np.asarray(mixing, dtype=float)])
    tail = np.ones_like(p)
    # tail[i] = prod_{j>i} p_j
    tail[:-1] = np.cumprod(p[::-1])[::-1][1:]
    return tail * (1.0 - p)


def expanded_hsd(rho, thetas, phis, mixing) -> tuple[float, float, float]:
    """``(purity, overlap, hsd)`` of the mixture from the explicit weighted sums."""
    m = as_density(rho).entries
    vecs = product_vectors(np.asarray(thetas), np.asarray(phis))
    w = explicit_weights(mixing)
    G = np.abs(vecs.conj() @ vecs.T) ** 2
    v = np.real(np.einsum("id,de,ie->i", vecs.conj(), m, vecs))
    purity = float(w @ G @ w)
    overlap = float(w @ v)
    r = float(np.real(np.vdot(m, m)))
    return purity, overlap, r + purity - 2.0 * overlap


@dataclass(frozen=True)
class CandidateOverlaps:
    """``Tr[rho sigma]`` and ``Tr[rho_prev sigma]`` for one trial state."""

    with_target: float
    with_current: float


def preselect(state: QgaState, cand: CandidateOverlaps) -> bool:
    # Tr[(sigma - rho_prev)(rho - rho_prev)] > 0, rearranged into overlaps
    return state.purity + cand.with_target > state.overlap + cand.with_current


def mixing_denominator(state: QgaState, cand: CandidateOverlaps) -> float:
    """``Tr[B^2]`` with ``B = rho_prev - sigma``."""
    return state.purity - 2.0 * cand.with_current + 1.0


def optimal_mixing_weight(state: QgaState, cand: CandidateOverlaps) -> Optional[float]:
    """Minimiser ``Tr[AB] / Tr[B^2]`` (``A = rho - sigma``), or None when not a success.

    ``p = 1`` would leave the mixture unchanged and is rejected.
    """
    den = mixing_denominator(state, cand)
    if den <= 1e-15:
        return None
    num = state.overlap - cand.with_target - cand.with_current + 1.0
    p = num / den
    if 0.0 <= p < 1.0:
        return float(p)
    return None


def qga_update(state: QgaState, thetas, phis, cand: CandidateOverlaps, p: float) -> QgaState:
    """Mix the candidate in with weight ``1 - p`` (in place; returns ``state``)."""
    q = 1.0 - p
    state.purity = p * p * state.purity + q * q + 2.0 * p * q * cand.with_current
    state.overlap = p * state.overlap + q * cand.with_target
    state.thetas.append(np.asarray(thetas, dtype=float))
    state.phis.append(np.asarray(phis, dtype=float))
    state.weights.append(float(p))
    state.c_s += 1
    if state.dense is not None:
        psi = product_vectors(np.atleast_2d(thetas), np.atleast_2d(phis))[0]
        state.dense = p * state.dense + q * np.outer(psi, psi.conj())
    return state


@dataclass
class QgaTrace:
    """One row per success (plus the starting row with ``c_s = 0``)."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    HEADER = ("c_t", "c_s", "hsd", "purity", "overlap", "p", "device_calls")

    def append(self, state: QgaState, p: Optional[float]) -> None:
        self.rows.append((state.c_t, state.c_s, state.hsd, state.purity, state.overlap, p, state.device_calls))

    def column(self, name: str) -> list:
        k = self.HEADER.index(name)
        return [row[k] for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for row in self.rows:
            w.writerow(["" if x is None else repr(x) if isinstance(x, float) else str(x) for x in row])
        return buf.getvalue()


@dataclass
class QgaResult:
    state: QgaState
    trace: QgaTrace
    halt_reason: str


class _Oracle:
    """Supplies Tr rho^2 and candidate overlaps, exactly or from shots."""

    def __init__(self, rho, mode, shots: ShotConfig, rng):
        self.m = as_density(rho).entries
        self.mode = mode
        self.shots = shots
        self.rng = rng

    # calls are counted in both modes: they are what a device would run
    def purity(self, state_calls: list) -> float:
        state_calls[0] += 1
        if self.mode == EXACT:
            return float(np.real(np.vdot(self.m, self.m)))
        return float(np.clip(sample_overlap(self.m, self.m, self.shots, self.rng).value, 0.0, 1.0))

    def with_target(self, psi, state_calls: list) -> float:
        state_calls[0] += 1
        if self.mode == EXACT:
            return float(np.real(np.vdot(psi, self.m @ psi)))
        return float(np.clip(sample_overlap(self.m, psi, self.shots, self.rng).value, 0.0, 1.0))

    def with_current(self, state: QgaState, psi, vecs, state_calls: list) -> float:
        state_calls[0] += len(vecs)
        if self.mode == EXACT:
            return float(np.real(np.vdot(psi, state.dense @ psi)))
        w = state.explicit_weights()
        vals = np.empty(len(vecs))
        for i, u in enumerate(vecs):
            vals[i] = sample_overlap(u, psi, self.shots, self.rng).value
        return float(w @ np.clip(vals, 0.0, 1.0))


def run_qga(rho, halt: HaltCriterion = HaltCriterion.default(), seed: int = 0, mode: str = EXACT, shots: ShotConfig | None = None) -> QgaResult:
    """Run the Gilbert iteration until ``halt`` fires.

    In exact mode overlaps with the running mixture come from its dense
    matrix; in shot mode they are summed over the stored component list,
    one sampled overlap per stored state.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rho = as_density(rho)
    n = rho.n
    seq = np.random.SeedSequence(seed)
    trial_seq, shot_seq = seq.spawn(2)
    rng = make_rng(trial_seq)
    oracle = _Oracle(rho, mode, shots or ShotConfig(), make_rng(shot_seq))
    calls = [0]

    t0, f0 = random_product_params(n, rng)
    psi0 = product_vectors(t0[None], f0[None])[0]
    r = oracle.purity(calls)
    state = QgaState(
        thetas=[t0],
        phis=[f0],
        weights=[],
        r=r,
        purity=1.0,
        overlap=oracle.with_target(psi0, calls),
        dense=np.outer(psi0, psi0.conj()) if mode == EXACT else None,
    )
    state.device_calls = calls[0]
    trace = QgaTrace(metadata={"seed": seed, "mode": mode, "n": n, "halt": halt.__dict__.copy()})
    trace.append(state, None)

    vecs = [psi0]
    failures = 0
    reason = "max_trials"
    while True:
        if halt.max_trials is not None and state.c_t >= halt.max_trials:
            reason = "max_trials"
            break
        if halt.max_successes is not None and state.c_s >= halt.max_successes:
            reason = "max_successes"
            break
        window = halt.window(state.c_s)
        if window is not None and failures >= window:
            reason = "stall"
            break

        state.c_t += 1
        th, ph = random_product_params(n, rng)
        psi = product_vectors(th[None], ph[None])[0]
        cand = CandidateOverlaps(
            with_target=oracle.with_target(psi, calls),
            with_current=oracle.with_current(state, psi, vecs, calls),
        )
        state.device_calls = calls[0]
        p = optimal_mixing_weight(state, cand) if preselect(state, cand) else None
        if p is None:
            failures += 1
            continue
        before = state.hsd
        qga_update(state, th, ph, cand, p)
        vecs.append(psi)
        failures = 0
        trace.append(state, p)
        if halt.min_improvement is not None and before - state.hsd < halt.min_improvement:
            reason = "min_improvement"
            break
    return QgaResult(state=state, trace=trace, halt_reason=reason)


def qga_call_count(c_t: int, exponent: float = DEFAULT_EXPONENT) -> int:
    """Modeled number of overlap evaluations after ``c_t`` trials.

    Successes grow like ``c_t**exponent``; spreading them evenly, one
    success lands every ``k = c_t**(1 - exponent)`` trials, so trial ``i``
    sees ``c_s = 1 + floor((i - 1) / k)`` and costs ``c_s (c_s + 1) / 2``.
    """
    c_t = int(c_t)
    if c_t < 1:
        raise ValueError("c_t must be at least 1")
    k = c_t ** (1.0 - exponent)
    total = 0
    m = 0
    # trials i - 1 in [m k, (m + 1) k) share c_s = m + 1
    while True:
        lo = math.ceil(m * k)
        if lo >= c_t:
            break
        hi = min(math.ceil((m + 1) * k), c_t)
        cs = m + 1
        total += (hi - lo) * cs * (cs + 1) // 2
        m += 1
    return total

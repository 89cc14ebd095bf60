"""Bilevel search for the closest fully separable state.

The upper level proposes product-state angles; every proposal is turned
into an :class:`~varsep.ensemble.OverlapCache` (the device round) and the
lower level picks the optimal mixing probabilities for it.

Two upper-level strategies are available:

``sinusoidal``
    Coordinate sweeps.  With ``p`` frozen the cost is exactly
    ``c0 + c1 cos(w t) + c2 sin(w t)`` in any single angle (``w = 2`` for
    theta, ``w = 1`` for phi), so three probes pin it down and the fitted
    minimiser is a guaranteed non-increase; ``p`` is re-solved there.
``annealing``
    Generalized simulated annealing: Tsallis-distributed visits on one
    component row, a short sinusoidal polish, Tsallis acceptance, and a
    restart from the incumbent when the visiting temperature has decayed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import gammaln

from ..ensemble import (
    EXACT,
    MODES,
    SHOTS,
    OverlapCache,
    SeparableEnsemble,
    build_cache,
    densify,
    estimator_calls,
    exact_cache_arrays,
)
from ..qstate import TWO_PI, DensityMatrix, as_density, product_vectors, qubit_factors
from ..swap_test import ShotConfig, make_rng, sample_overlap
from ..trace import OptimizationTrace
from .lower import LowerSolution, lower_solve

ANNEALING = "annealing"
SINUSOIDAL = "sinusoidal"
OPTIMIZERS = (ANNEALING, SINUSOIDAL)

# components lighter than this are treated as inactive by the surrogate
INACTIVE_WEIGHT = 1e-9
_THIRD = 2.0 * np.pi / 3.0


class BudgetExhausted(Exception):
    """Raised by the objective once the evaluation budget is spent."""


@dataclass(frozen=True)
class AnnealingSchedule:
    """GSA knobs (visiting/acceptance shape parameters and temperatures)."""

    initial_temp: float = 1.0
    visit: float = 2.62
    accept: float = -5.0
    restart_temp_ratio: float = 2e-5
    polish_sweeps: int = 5
    merge_probability: float = 0.25
    merge_overlap: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.merge_probability <= 1.0:
            raise ValueError("merge_probability must lie in [0, 1]")
        if not 1.0 < self.visit < 3.0:
            raise ValueError("visit parameter must lie in (1, 3)")
        if self.accept >= 1.0:
            raise ValueError("accept parameter must be below 1")
        if self.initial_temp <= 0:
            raise ValueError("initial_temp must be positive")


@dataclass(frozen=True)
class VsvConfig:
    s: Optional[int] = None
    optimizer: str = ANNEALING
    max_evaluations: int = 20000
    lower_tolerance: float = 1e-10
    mode: str = EXACT
    shots: ShotConfig = field(default_factory=ShotConfig)
    seed: int = 0
    schedule: AnnealingSchedule = field(default_factory=AnnealingSchedule)
    resolve_probes: bool = False
    stall_tolerance: float = 1e-13

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be positive")
        if self.s is not None and self.s < 1:
            raise ValueError("s must be at least 1")
        if self.lower_tolerance <= 0:
            raise ValueError("lower_tolerance must be positive")

    def components(self, n: int) -> int:
        s = (1 << n) if self.s is None else int(self.s)
        if not 1 <= s <= 4**n:
            raise ValueError(f"s = {s} outside [1, 4^n = {4**n}]")
        return s

    def parameter_count(self, n: int) -> int:
        return self.components(n) * (2 * n + 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "VsvConfig":
        data = dict(data)
        if isinstance(data.get("shots"), dict):
            data["shots"] = ShotConfig(**data["shots"])
        if isinstance(data.get("schedule"), dict):
            data["schedule"] = AnnealingSchedule(**data["schedule"])
        return cls(**data)


@dataclass
class Point:
    """Mutable upper-level iterate: angle rows, mixing vector and its cost."""

    thetas: np.ndarray
    phis: np.ndarray
    p: np.ndarray
    value: float

    def copy(self) -> "Point":
        return Point(self.thetas.copy(), self.phis.copy(), self.p.copy(), self.value)

    def ensemble(self) -> SeparableEnsemble:
        p = np.clip(self.p, 0.0, None)
        return SeparableEnsemble(p / p.sum(), self.thetas, self.phis)


class VsvObjective:
    """Cost oracle with evaluation bookkeeping.

    Every call that needs fresh device data (``evaluate`` and ``surrogate``)
    counts as one evaluation.  Full evaluations (with the lower solve) are
    the proposals recorded in the trace.
    """

    def __init__(
        self,
        rho,
        mode: str = EXACT,
        shots: ShotConfig | None = None,
        rng=None,
        lower_tolerance: float = 1e-10,
        budget: int | None = None,
    ):
        self.rho = as_density(rho)
        self.mode = mode
        self.shots = shots or ShotConfig()
        self.rng = make_rng(self.shots.seed) if rng is None else rng
        self.lower_tolerance = lower_tolerance
        self.budget = budget
        self.evaluations = 0
        self.device_calls = 0
        self.trace = OptimizationTrace()
        self.best: Optional[Point] = None
        self.lower_failures = 0
        m = self.rho.entries
        if mode == EXACT:
            self.r = float(np.real(np.vdot(m, m)))
        else:
            est = sample_overlap(m, m, self.shots, self.rng)
            self.r = float(np.clip(est.value, 0.0, 1.0))
            self.device_calls += 1

    @property
    def n(self) -> int:
        return self.rho.n

    @property
    def exhausted(self) -> bool:
        return self.budget is not None and self.evaluations >= self.budget

    def cache(self, thetas, phis) -> OverlapCache:
        if self.exhausted:
            raise BudgetExhausted
        self.evaluations += 1
        s = thetas.shape[0]
        self.device_calls += estimator_calls(s) - 1
        if self.mode == EXACT:
            r, v, G = exact_cache_arrays(self.rho.entries, product_vectors(thetas, phis), self.r)
            return OverlapCache(r=r, v=v, G=G)
        return build_cache(self.rho, thetas, phis, SHOTS, self.shots, self.rng, r=self.r)

    def solve(self, cache: OverlapCache, p0=None) -> LowerSolution:
        sol = lower_solve(cache, self.lower_tolerance, p0=p0)
        if not sol.converged:
            self.lower_failures += 1
        return sol

    def evaluate(self, thetas, phis, p0=None) -> Point:
        cache = self.cache(thetas, phis)
        sol = self.solve(cache, p0)
        pt = Point(thetas.copy(), phis.copy(), sol.p, sol.value)
        if self.best is None or pt.value < self.best.value:
            self.best = pt.copy()
        self.trace.append(self.evaluations, self.device_calls, pt.value, self.best.value)
        return pt

    def surrogate(self, thetas, phis, p, component: int) -> float:
        """Frozen-p cost, or the reduced cost of an inactive component.

        Both are exact sinusoids in any single angle of ``component``.
        """
        cache = self.cache(thetas, phis)
        if p[component] > INACTIVE_WEIGHT:
            return cache.r + float(p @ cache.G @ p) - 2.0 * float(cache.v @ p)
        return 2.0 * (float(cache.G[component] @ p) - float(cache.v[component]))


@dataclass(frozen=True)
class SinusoidFit:
    c0: float
    c1: float
    c2: float
    frequency: float
    probes: tuple
    values: tuple

    def __call__(self, offset):
        u = self.frequency * np.asarray(offset)
        return self.c0 + self.c1 * np.cos(u) + self.c2 * np.sin(u)

    @property
    def amplitude(self) -> float:
        return math.hypot(self.c1, self.c2)

    def argmin(self) -> float:
        return math.atan2(-self.c2, -self.c1) / self.frequency


def fit_sinusoid(f0: float, f_plus: float, f_minus: float, frequency: float) -> SinusoidFit:
    """Fit through values at offsets 0, +2pi/3 and -2pi/3 of the scaled angle."""
    c0 = (f0 + f_plus + f_minus) / 3.0
    c1 = (2.0 * f0 - f_plus - f_minus) / 3.0
    c2 = (f_plus - f_minus) / math.sqrt(3.0)
    offs = (0.0, _THIRD / frequency, -_THIRD / frequency)
    return SinusoidFit(c0, c1, c2, frequency, offs, (f0, f_plus, f_minus))


def split_index(index: int, s: int, n: int) -> tuple[str, int, int]:
    """Flat parameter index -> (``"theta"``/``"phi"``, component, qubit)."""
    kind, k = divmod(int(index), s * n)
    if kind not in (0, 1):
        raise IndexError(f"parameter index {index} out of range")
    i, j = divmod(k, n)
    return ("theta" if kind == 0 else "phi"), i, j


def coordinate_sinusoidal_step(
    objective: VsvObjective,
    point: Point,
    index: int,
    resolve_probes: bool = False,
    degenerate_tol: float = 1e-14,
):
    """One sinusoidal coordinate update of a single angle.

    Returns ``(new_point, fit)``; ``fit`` is None when the coordinate was
    left alone because the fitted sinusoid is flat.

    By default the two probes freeze ``p`` (or use the reduced cost for an
    inactive component), which makes the fit exact.  With
    ``resolve_probes=True`` every probe re-runs the lower solve instead; the
    restricted cost is then only approximately sinusoidal.
    """
    s, n = point.thetas.shape
    kind, i, j = split_index(index, s, n)
    w = 2.0 if kind == "theta" else 1.0
    work = point.copy()
    arr = work.thetas if kind == "theta" else work.phis
    x0 = arr[i, j]

    probes = []
    if resolve_probes:
        f0 = point.value
        for off in (_THIRD / w, -_THIRD / w):
            arr[i, j] = x0 + off
            probes.append(objective.evaluate(work.thetas, work.phis, point.p))
        vals = [pt.value for pt in probes]
    else:
        inactive = point.p[i] <= INACTIVE_WEIGHT
        f0 = objective.surrogate(work.thetas, work.phis, point.p, i) if inactive else point.value
        vals = []
        for off in (_THIRD / w, -_THIRD / w):
            arr[i, j] = x0 + off
            vals.append(objective.surrogate(work.thetas, work.phis, point.p, i))
    fit = fit_sinusoid(f0, vals[0], vals[1], w)
    arr[i, j] = x0
    if fit.amplitude <= degenerate_tol:
        return point, None

    arr[i, j] = np.mod(x0 + fit.argmin(), TWO_PI)
    moved = objective.evaluate(work.thetas, work.phis, point.p)
    # earlier candidate wins ties
    best = point
    for cand in [*probes, moved]:
        if cand.value < best.value:
            best = cand
    if best is point and moved.value <= point.value:
        best = moved
    return best, fit


def sweep(objective: VsvObjective, point: Point, rng, rows=None, resolve_probes: bool = False) -> Point:
    s, n = point.thetas.shape
    rows = range(s) if rows is None else rows
    coords = [kind * s * n + i * n + j for kind in (0, 1) for i in rows for j in range(n)]
    for idx in rng.permutation(coords):
        if objective.exhausted:
            break
        point, _ = coordinate_sinusoidal_step(objective, point, int(idx), resolve_probes)
    return point


def polish(objective, point, rng, rows=None, max_sweeps=None, tol=1e-13, resolve_probes=False) -> Point:
    """Sinusoidal sweeps until one gains less than ``tol``."""
    done = 0
    while not objective.exhausted and (max_sweeps is None or done < max_sweeps):
        before = point.value
        point = sweep(objective, point, rng, rows, resolve_probes)
        done += 1
        if before - point.value < tol:
            break
    return point


def visiting_step(rng, temperature: float, q: float, size: int) -> np.ndarray:
    """Tsallis-Stariolo visiting distribution draw (distorted Cauchy-Lorentz)."""
    f1 = math.exp(math.log(temperature) / (q - 1.0))
    f2 = math.exp((4.0 - q) * math.log(q - 1.0))
    f3 = math.exp((2.0 - q) * math.log(2.0) / (q - 1.0))
    f4 = math.sqrt(math.pi) * f1 * f2 / (f3 * (3.0 - q))
    f5 = 1.0 / (q - 1.0) - 0.5
    f6 = math.pi * (1.0 - f5) / math.sin(math.pi * (1.0 - f5)) / math.exp(gammaln(2.0 - f5))
    sigma = math.exp(-(q - 1.0) * math.log(f6 / f4) / (3.0 - q))
    x = sigma * rng.standard_normal(size)
    y = np.abs(rng.standard_normal(size))
    den = np.exp((q - 1.0) * np.log(np.maximum(y, 1e-300)) / (3.0 - q))
    return x / den


def visiting_temperature(sched: AnnealingSchedule, t: int) -> float:
    qv = sched.visit
    return sched.initial_temp * (2.0 ** (qv - 1.0) - 1.0) / ((1.0 + t) ** (qv - 1.0) - 1.0)


def tsallis_accept(delta: float, temperature: float, qa: float, rng) -> bool:
    if delta <= 0:
        return True
    base = 1.0 - (1.0 - qa) * delta / temperature
    if base <= 0:
        return False
    return rng.random() < base ** (1.0 / (1.0 - qa))


def closest_cluster(point: Point, min_overlap: float) -> list[int]:
    """Weighted rows whose state overlaps the heaviest row by ``min_overlap`` or more.

    The heaviest row comes first; an empty list means nothing to merge.
    """
    vecs = product_vectors(point.thetas, point.phis)
    live = point.p > INACTIVE_WEIGHT
    i = int(np.argmax(point.p))
    overlap = np.abs(vecs.conj() @ vecs[i]) ** 2
    near = np.flatnonzero(live & (overlap >= min_overlap))
    near = [int(k) for k in near if k != i]
    return [i] + near if near else []


def merge_rows(point: Point, rows) -> tuple[np.ndarray, np.ndarray]:
    """Angles with the given rows all replaced by one product state.

    Qubit by qubit, the replacement is the dominant eigenvector of the
    weighted single-qubit mixture of the factors.  Near the optimum the
    cost of a tight cluster of components depends mostly on its weighted
    mean, a direction single-angle moves follow only slowly; collapsing the
    cluster restores fast coordinate convergence.
    """
    rows = list(rows)
    f = qubit_factors(point.thetas[rows], point.phis[rows])
    w = point.p[rows]
    thetas, phis = point.thetas.copy(), point.phis.copy()
    for q in range(f.shape[1]):
        m = np.einsum("k,ka,kb->ab", w, f[:, q], f[:, q].conj())
        c = np.linalg.eigh(m)[1][:, -1]
        thetas[rows, q] = math.atan2(abs(c[1]), abs(c[0]))
        phis[rows, q] = float(np.angle(c[1]) - np.angle(c[0])) % TWO_PI
    return thetas, phis


def _anneal(objective, point, rng, cfg: VsvConfig) -> None:
    sched = cfg.schedule
    point = polish(objective, point, rng, max_sweeps=sched.polish_sweeps, tol=cfg.stall_tolerance)
    s, n = point.thetas.shape
    t = 1
    while not objective.exhausted:
        temp = visiting_temperature(sched, t)
        if temp < sched.initial_temp * sched.restart_temp_ratio:
            t = 1
            point = objective.best.copy()
            continue
        cluster = closest_cluster(point, sched.merge_overlap) if rng.random() < sched.merge_probability else []
        if cluster:
            th, ph = merge_rows(point, cluster)
            cand = objective.evaluate(th, ph, point.p)
            # the merged rows are identical, so polishing one of them suffices
            rows = cluster[:1]
        else:
            i = int(rng.integers(s))
            cand = point.copy()
            cand.thetas[i] = np.mod(cand.thetas[i] + visiting_step(rng, temp, sched.visit, n), TWO_PI)
            cand.phis[i] = np.mod(cand.phis[i] + visiting_step(rng, temp, sched.visit, n), TWO_PI)
            cand = objective.evaluate(cand.thetas, cand.phis, point.p)
            rows = [i]
        cand = polish(objective, cand, rng, rows=rows, max_sweeps=sched.polish_sweeps, tol=cfg.stall_tolerance)
        cand = polish(objective, cand, rng, max_sweeps=1, tol=cfg.stall_tolerance)
        if tsallis_accept(cand.value - point.value, temp / (t + 1), sched.accept, rng):
            point = cand
        t += 1


def _coordinate_descent(objective, point, rng, cfg: VsvConfig) -> None:
    # sampled costs fluctuate, so the stall test is meaningless in shot mode
    tol = cfg.stall_tolerance if cfg.mode == EXACT else -np.inf
    polish(objective, point, rng, tol=tol, resolve_probes=cfg.resolve_probes)


@dataclass
class VsvResult:
    best_ensemble: SeparableEnsemble
    hse: float
    trace: OptimizationTrace
    evaluation_count: int
    device_calls: int
    lower_failures: int = 0

    def css(self) -> DensityMatrix:
        return densify(self.best_ensemble)


def initial_point(objective: VsvObjective, s: int, rng) -> Point:
    n = objective.n
    thetas = rng.uniform(0.0, TWO_PI, (s, n))
    phis = rng.uniform(0.0, TWO_PI, (s, n))
    return objective.evaluate(thetas, phis, np.full(s, 1.0 / s))


def run_vsv(rho, cfg: VsvConfig = VsvConfig(), tag: str = "") -> VsvResult:
    """Approximate the closest separable state of ``rho`` within the evaluation budget."""
    rho = as_density(rho)
    s = cfg.components(rho.n)
    seq = np.random.SeedSequence(cfg.seed)
    opt_seq, shot_seq = seq.spawn(2)
    rng = make_rng(opt_seq)
    shots = replace(cfg.shots, seed=int(shot_seq.generate_state(1)[0]))
    objective = VsvObjective(rho, cfg.mode, shots, make_rng(shot_seq), cfg.lower_tolerance, cfg.max_evaluations)
    objective.trace.metadata.update({"seed": cfg.seed, "config": cfg.to_dict(), "tag": tag, "n": rho.n, "s": s})

    point = initial_point(objective, s, rng)
    try:
        if cfg.optimizer == ANNEALING:
            _anneal(objective, point, rng, cfg)
        else:
            _coordinate_descent(objective, point, rng, cfg)
    except BudgetExhausted:
        pass

    best = objective.best
    return VsvResult(
        best_ensemble=best.ensemble(),
        hse=float(best.value),
        trace=objective.trace,
        evaluation_count=objective.evaluations,
        device_calls=objective.device_calls,
        lower_failures=objective.lower_failures,
    )

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``; the status lines
bypass output capture so they show up in the pytest log.
"""

import numpy as np
import pytest

from conftest import dense_mixture, trace_prod
from varsep.ensemble import SeparableEnsemble, build_cache, ensemble_overlap, ensemble_purity, hsd_from_cache
from varsep.qga import CandidateOverlaps, HaltCriterion, QgaState, expanded_hsd, qga_call_count, qga_update, run_qga
from varsep.qstate import (
    ProductStateParams,
    build_ghz,
    build_product_state,
    build_xmems,
    product_vectors,
    random_density_matrix,
    random_product_params,
    random_pure_state,
)
from varsep.reference import (
    KKT_TOLERANCE,
    XmemsCssParams,
    css_matrix,
    css_pattern_negative_eigenvalue,
    ghz_hse,
    xmems_css_2q,
    xmems_css_nq,
    xmems_hse_bound,
)
from varsep.swap_test import ShotConfig, overlap_exact, sample_overlap
from varsep.vsv import VsvConfig, build_witness, lower_solve, run_vsv

GHZ_BUDGET = 20_000
PRODUCT_BUDGET = 10_000


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}  {detail}")
        assert ok, f"criterion {number} failed: {detail}"

    return _report


def test_c01_ghz_closed_form(report):
    gaps = {}
    for n in (2, 3, 4, 5):
        # three qubits need 2^(n+1) components to reach the tolerance
        s = 16 if n == 3 else None
        best = min(run_vsv(build_ghz(n).density(), VsvConfig(s=s, max_evaluations=GHZ_BUDGET, seed=k)).hse for k in range(3))
        gaps[n] = best - ghz_hse(n)
    tol = {2: 1e-3, 3: 1e-3, 4: 1e-2, 5: 1e-2}
    ok = all(abs(gaps[n]) <= tol[n] for n in gaps)
    report(1, "GHZ closed form vs VSV", ok, " ".join(f"n={n}:{g:.2e}" for n, g in gaps.items()))


def test_c02_two_qubit_xmems(report):
    gaps = []
    for g in (0.0, 0.1, 0.2, 1 / 3, 0.4, 0.5):
        res = run_vsv(build_xmems(2, g), VsvConfig(max_evaluations=GHZ_BUDGET, seed=0))
        gaps.append(abs(res.hse - xmems_css_2q(g).hse))
    report(2, "two-qubit X-MEMS sweep", max(gaps) <= 1e-3, f"max gap {max(gaps):.2e}")


def test_c03_three_qubit_xmems(report):
    gaps, residuals = [], []
    for g in (0.0, 0.1, 0.2, 1 / 3, 0.4, 0.5):
        ref = xmems_css_nq(3, g)
        residuals.append(ref.kkt_residual)
        res = run_vsv(build_xmems(3, g), VsvConfig(max_evaluations=GHZ_BUDGET, seed=0))
        gaps.append(abs(res.hse - ref.hse))
    endpoint = abs(xmems_css_nq(3, 0.5).hse - 6 / 13)
    ok = max(gaps) <= 1e-2 and max(residuals) <= KKT_TOLERANCE and endpoint <= 1e-6
    report(3, "three-qubit X-MEMS vs KKT reference", ok, f"max gap {max(gaps):.2e}, max KKT {max(residuals):.1e}, endpoint {endpoint:.1e}")


def test_c04_branch_continuity(report):
    eps = 1e-12
    lo, hi = xmems_css_2q(1 / 3 - eps), xmems_css_2q(1 / 3 + eps)
    two = max(
        abs(lo.hse - hi.hse),
        abs(lo.params.a - hi.params.a),
        abs(lo.params.b - hi.params.b),
        abs(abs(lo.params.delta) - abs(hi.params.delta)),
    )
    jumps = []
    for n in range(3, 10):
        g0 = 1 / ((1 << (n - 1)) + 1)
        a, b = xmems_css_nq(n, g0 - 1e-10), xmems_css_nq(n, g0 + 1e-10)
        jumps.append(max(abs(a.hse - b.hse), abs(a.params.a - b.params.a), abs(a.params.b - b.params.b)))
    ok = two <= 1e-9 and max(jumps) <= 1e-6
    report(4, "branch continuity", ok, f"2q {two:.1e}, n-qubit {max(jumps):.1e}")


def test_c05_upper_bound(report):
    grid = np.linspace(0, 0.5, 50)
    gaps, ok = {}, True
    for n in range(2, 10):
        diff = np.array([xmems_hse_bound(g) - xmems_css_nq(n, g).hse for g in grid])
        ok &= bool(diff.min() >= -1e-12)
        gaps[n] = float(diff.max())
    ok &= gaps[9] < gaps[8]
    report(5, "upper bound 2|gamma|^2", ok, f"gap n=8 {gaps[8]:.3e}, n=9 {gaps[9]:.3e}")


def test_c06_estimator_unbiased(report):
    rng = np.random.default_rng(6)
    worst, max_se = 0.0, 0.0
    for k in range(10):
        n = 1 + k % 3
        rho, psi = random_density_matrix(n, rng), random_pure_state(n, rng)
        est = [sample_overlap(rho, psi, ShotConfig(shots=8192, seed=1000 * k + j)) for j in range(100)]
        vals = np.array([e.value for e in est])
        ses = np.array([e.standard_error for e in est])
        pooled = np.sqrt(np.mean(ses**2) / len(est))
        worst = max(worst, abs(vals.mean() - overlap_exact(rho, psi)) / pooled)
        max_se = max(max_se, ses.max())
    ok = worst <= 3 and max_se <= 1 / np.sqrt(8192)
    report(6, "estimator unbiasedness", ok, f"worst |bias|/SE {worst:.2f}, max SE {max_se:.2e}")


def test_c07_oracle_equivalence(report):
    rng = np.random.default_rng(7)
    err = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 4))
        s = int(rng.integers(1, min(8, 4**n) + 1))
        rho = random_density_matrix(n, rng).entries
        ens = SeparableEnsemble.random(n, s, rng)
        c = build_cache(rho, ens.thetas, ens.phis)
        sigma = dense_mixture(ens.p, ens.thetas, ens.phis)
        diff = rho - sigma
        err = max(
            err,
            abs(ensemble_purity(c, ens.p) - trace_prod(sigma, sigma)),
            abs(ensemble_overlap(c, ens.p) - trace_prod(rho, sigma)),
            abs(hsd_from_cache(c, ens.p) - trace_prod(diff, diff)),
        )
        # QGA recursions over s - 1 mixing steps
        t, f = random_product_params(n, rng, size=s)
        vecs = product_vectors(t, f)
        st = QgaState([t[0]], [f[0]], [], trace_prod(rho, rho), 1.0, float(np.real(np.vdot(vecs[0], rho @ vecs[0]))))
        dense = np.outer(vecs[0], vecs[0].conj())
        for k in range(1, s):
            psi = vecs[k]
            cand = CandidateOverlaps(float(np.real(np.vdot(psi, rho @ psi))), float(np.real(np.vdot(psi, dense @ psi))))
            p = float(rng.uniform())
            qga_update(st, t[k], f[k], cand, p)
            dense = p * dense + (1 - p) * np.outer(psi, psi.conj())
        d = rho - dense
        pur, ov, h = expanded_hsd(rho, st.thetas, st.phis, st.weights)
        err = max(
            err,
            abs(st.purity - trace_prod(dense, dense)),
            abs(st.overlap - trace_prod(rho, dense)),
            abs(st.hsd - trace_prod(d, d)),
            abs(h - st.hsd),
        )
    report(7, "oracle equivalence (500 instances)", err <= 1e-10, f"max error {err:.1e}")


def _simplex_grid(s, step):
    k = int(round(1 / step))
    if s == 1:
        return np.ones((1, 1))
    if s == 2:
        a = np.arange(k + 1) / k
        return np.stack([a, 1 - a], 1)
    i, j = np.triu_indices(k + 1)
    # points (i, j - i, k - j) / k enumerate the simplex
    return np.stack([i, j - i, k - j], 1) / k


def test_c08_lower_level_optimality(report):
    rng = np.random.default_rng(8)
    worst, below = 0.0, True
    for _ in range(100):
        n = int(rng.integers(1, 4))
        s = int(rng.integers(1, 4))
        ens = SeparableEnsemble.random(n, s, rng)
        c = build_cache(random_density_matrix(n, rng), ens.thetas, ens.phis)
        P = _simplex_grid(s, 1e-3)
        grid = float(np.min(c.r + np.einsum("ki,ij,kj->k", P, c.G, P) - 2 * P @ c.v))
        sol = lower_solve(c)
        below &= sol.value <= grid + 1e-12
        worst = max(worst, abs(sol.value - grid))
    report(8, "lower-level vs simplex grid", worst <= 1e-5 and below, f"max |diff| {worst:.1e}")


def test_c09_qga_soundness(report):
    ok = True
    cases = [("ghz2", build_ghz(2).density(), ghz_hse(2))]
    cases += [(f"x{g:.3f}", build_xmems(2, g), xmems_css_2q(g).hse) for g in (0.0, 0.15, 1 / 3, 0.45)]
    floor_margin = np.inf
    for _, rho, floor in cases:
        res = run_qga(rho, HaltCriterion(max_trials=20_000), seed=9)
        hsd = res.trace.column("hsd")
        ok &= all(b < a for a, b in zip(hsd, hsd[1:]))
        floor_margin = min(floor_margin, min(hsd) - floor)
    ok &= floor_margin >= -1e-12
    calls = qga_call_count(10**6)
    ok &= abs(calls / 3.3e10 - 1) <= 0.1
    report(9, "QGA soundness and call model", ok, f"min hsd - E_HS {floor_margin:.2e}, calls(1e6) {calls:.3e}")


def test_c10_no_false_entanglement(report):
    rng = np.random.default_rng(10)
    worst = 0.0
    for k in range(50):
        n = 1 + k % 3
        t, f = random_product_params(n, rng)
        rho = build_product_state(ProductStateParams(t, f)).density()
        worst = max(worst, abs(run_vsv(rho, VsvConfig(max_evaluations=PRODUCT_BUDGET, seed=k)).hse))
    report(10, "no false entanglement on product states", worst <= 1e-6, f"max |hse| {worst:.1e}")


def test_c11_witness(report):
    rho = build_ghz(2).density().entries
    sigma = css_matrix(xmems_css_2q(0.5).params)
    w = build_witness(rho, sigma, budget=20, rng=11)
    t, f = random_product_params(2, np.random.default_rng(11), size=10_000)
    vecs = product_vectors(t, f)
    low = float(np.real(np.einsum("kd,de,ke->k", vecs.conj(), w.W, vecs)).min())
    ok = w.expectation(rho) < 0 and low >= -1e-6
    report(11, "witness sanity on GHZ2", ok, f"Tr(W rho) {w.expectation(rho):.4f}, min on products {low:.2e}")


def test_c12_negativity_condition(report):
    rng = np.random.default_rng(12)
    bad = 0
    for _ in range(10_000):
        a = rng.uniform(0, 1)
        b = rng.uniform(0, 1 - a)
        d = rng.uniform(0, a / 2) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        lam = css_pattern_negative_eigenvalue(XmemsCssParams(a, b, d, 3))
        bad += (lam >= 0) != (abs(d) ** 2 <= b * (1 - a - b) / 9)
    report(12, "negativity condition equivalence", bad == 0, f"{bad} disagreements in 10000")

import numpy as np
import pytest

from conftest import dense_mixture
from varsep.ensemble import build_cache, hsd_from_cache
from varsep.qstate import ProductStateParams, build_ghz, build_product_state, build_xmems, hsd_exact, random_product_params
from varsep.reference import xmems_css_2q
from varsep.swap_test import ShotConfig
from varsep.vsv import AnnealingSchedule, VsvConfig, VsvObjective, coordinate_sinusoidal_step, fit_sinusoid, run_vsv
from varsep.vsv.core import Point, closest_cluster, merge_rows, split_index, visiting_step


def _point(obj, thetas, phis):
    return obj.evaluate(np.array(thetas, dtype=float), np.array(phis, dtype=float))


def test_single_qubit_theta_minimiser():
    obj = VsvObjective(np.diag([1.0, 0.0]))
    for start in (0.4, 1.3, 2.9):
        pt = _point(obj, [[start]], [[0.0]])
        new, fit = coordinate_sinusoidal_step(obj, pt, 0)
        assert fit is not None
        assert abs(np.sin(new.thetas[0, 0])) < 1e-9
        assert new.value < 1e-15


def test_fit_reproduces_probe_values():
    rng = np.random.default_rng(5)
    rho = build_xmems(2, 0.3)
    obj = VsvObjective(rho)
    pt = _point(obj, rng.uniform(0, 6, (4, 2)), rng.uniform(0, 6, (4, 2)))
    for idx in range(16):
        kind, i, j = split_index(idx, 4, 2)
        _, fit = coordinate_sinusoidal_step(obj, pt, idx)
        assert np.allclose(fit(np.array(fit.probes)), fit.values, atol=1e-9)
        # with p frozen the restricted cost really is the fitted sinusoid
        if pt.p[i] > 1e-9:
            for off in (0.3, 1.7):
                th, ph = pt.thetas.copy(), pt.phis.copy()
                (th if kind == "theta" else ph)[i, j] += off
                c = build_cache(rho, th, ph)
                assert abs(hsd_from_cache(c, pt.p) - fit(off)) < 1e-9


def test_constant_cost_leaves_parameter():
    # phi of a qubit sitting at |0> does not change the state
    obj = VsvObjective(np.eye(2) / 2)
    pt = _point(obj, [[0.0]], [[1.0]])
    new, fit = coordinate_sinusoidal_step(obj, pt, 1)
    assert fit is None
    assert new is pt


def test_step_never_increases_cost(rng):
    rho = build_ghz(3).density()
    obj = VsvObjective(rho)
    pt = _point(obj, rng.uniform(0, 6, (8, 3)), rng.uniform(0, 6, (8, 3)))
    for idx in rng.integers(0, 48, 40):
        new, _ = coordinate_sinusoidal_step(obj, pt, int(idx))
        assert new.value <= pt.value + 1e-15
        pt = new


def test_fit_sinusoid_closed_form():
    c0, c1, c2, w = 0.4, -0.2, 0.7, 2.0
    f = lambda x: c0 + c1 * np.cos(w * x) + c2 * np.sin(w * x)
    fit = fit_sinusoid(f(0.0), f(2 * np.pi / 3 / w), f(-2 * np.pi / 3 / w), w)
    assert np.allclose([fit.c0, fit.c1, fit.c2], [c0, c1, c2])
    xs = np.linspace(0, np.pi, 2001)
    assert f(fit.argmin()) <= f(xs).min() + 1e-12


def test_product_state_is_found(rng):
    t, f = random_product_params(2, rng)
    rho = build_product_state(ProductStateParams(t, f)).density()
    res = run_vsv(rho, VsvConfig(max_evaluations=2000, seed=1))
    assert abs(res.hse) <= 1e-6


def test_merge_rows_collapses_cluster():
    pt = Point(
        np.array([[0.30, 1.00], [0.32, 0.98], [1.50, 0.20]]),
        np.array([[0.10, 2.00], [0.12, 2.02], [0.00, 0.00]]),
        np.array([0.6, 0.3, 0.1]),
        0.0,
    )
    assert closest_cluster(pt, 0.9) == [0, 1]
    th, ph = merge_rows(pt, [0, 1])
    assert np.allclose(th[0], th[1]) and np.allclose(ph[0], ph[1])
    assert np.array_equal(th[2], pt.thetas[2])
    # the merged factor is close to the weighted mean of the pair
    assert np.allclose(th[0], [0.3067, 0.9933], atol=2e-3)
    assert closest_cluster(pt, 0.99999) == []
    # identical rows merge to themselves
    th, ph = merge_rows(pt, [0, 0])
    assert np.allclose(np.exp(2j * th[0]), np.exp(2j * pt.thetas[0]))


def test_ghz2_budget_5000():
    res = run_vsv(build_ghz(2).density(), VsvConfig(max_evaluations=5000, seed=0))
    assert abs(res.hse - 1 / 3) < 1e-3
    assert res.hse >= 1 / 3 - 1e-12


def test_xmems_half_matches_closed_form():
    res = run_vsv(build_xmems(2, 0.5), VsvConfig(max_evaluations=5000, seed=2))
    assert abs(res.hse - xmems_css_2q(0.5).hse) < 1e-3


def test_result_contracts(rng):
    rho = build_xmems(2, 0.25)
    cfg = VsvConfig(max_evaluations=1500, seed=4)
    res = run_vsv(rho, cfg)
    ens = res.best_ensemble
    sigma = dense_mixture(ens.p, ens.thetas, ens.phis)
    assert abs(res.hse - hsd_exact(rho, sigma)) < 1e-12
    assert abs(res.hse - hsd_exact(rho, res.css())) < 1e-12
    best = res.trace.column("best_hsd")
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert best[-1] == res.hse
    its = res.trace.column("iteration")
    assert all(b > a for a, b in zip(its, its[1:]))
    assert res.evaluation_count == cfg.max_evaluations
    assert res.trace.column("evaluations")[-1] <= cfg.max_evaluations


def test_deterministic_given_seed():
    rho = build_ghz(2).density()
    cfg = VsvConfig(max_evaluations=800, seed=11)
    a, b = run_vsv(rho, cfg), run_vsv(rho, cfg)
    assert a.hse == b.hse
    assert a.trace.column("proposal_hsd") == b.trace.column("proposal_hsd")
    assert a.trace.to_csv(include_time=False) == b.trace.to_csv(include_time=False)


def test_sinusoidal_optimizer_and_literal_variant():
    rho = build_ghz(2).density()
    res = run_vsv(rho, VsvConfig(optimizer="sinusoidal", max_evaluations=3000, seed=1))
    assert abs(res.hse - 1 / 3) < 1e-3
    lit = run_vsv(rho, VsvConfig(optimizer="sinusoidal", resolve_probes=True, max_evaluations=600, seed=1))
    assert lit.hse >= 1 / 3 - 1e-12
    best = lit.trace.column("best_hsd")
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_shot_mode_run():
    rho = build_ghz(2).density()
    cfg = VsvConfig(max_evaluations=200, mode="shots", shots=ShotConfig(shots=2048), seed=3)
    res = run_vsv(rho, cfg)
    assert res.evaluation_count == 200
    # r once, then s + s(s-1)/2 per proposal
    assert res.device_calls == 1 + 200 * 10
    assert abs(res.hse - 1 / 3) < 0.2
    again = run_vsv(rho, cfg)
    assert again.hse == res.hse


def test_config_validation():
    with pytest.raises(ValueError):
        VsvConfig(optimizer="nelder-mead")
    with pytest.raises(ValueError):
        VsvConfig(max_evaluations=0)
    with pytest.raises(ValueError):
        VsvConfig(mode="hardware")
    with pytest.raises(ValueError):
        VsvConfig(s=17).components(2)
    with pytest.raises(ValueError):
        AnnealingSchedule(merge_probability=1.5)
    cfg = VsvConfig()
    assert cfg.components(3) == 8
    assert cfg.parameter_count(3) == 8 * 7
    assert VsvConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(Exception):
        run_vsv(np.diag([0.7, 0.7]), cfg)


def test_visiting_distribution_heavy_tail():
    rng = np.random.default_rng(0)
    x = visiting_step(rng, 1.0, 2.62, 20000)
    assert np.all(np.isfinite(x))
    # heavier than Gaussian: many more large moves than a normal of equal IQR
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    assert np.mean(np.abs(x) > 4 * iqr) > 0.01
    cold = visiting_step(rng, 1e-4, 2.62, 20000)
    assert np.median(np.abs(cold)) < np.median(np.abs(x))


def test_point_ensemble_roundtrip():
    obj = VsvObjective(build_ghz(2).density())
    pt = _point(obj, [[0, 0], [np.pi / 2, np.pi / 2]], [[0, 0], [0, 0]])
    assert isinstance(pt, Point)
    assert np.allclose(pt.p, [0.5, 0.5])
    assert abs(pt.value - 0.5) < 1e-12
    assert pt.ensemble().s == 2

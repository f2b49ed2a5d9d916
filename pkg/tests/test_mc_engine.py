import math

import numpy as np
import pytest

from rwkit import cirpp
from rwkit.cirpp import CirParams
from rwkit.exceptions import GridMismatch, TooFewPaths
from rwkit.mc_engine import (
    PathGrid,
    _path_rng,
    rn_calibration_stats,
    rn_functionals,
    rw_transform_ensemble,
    sample_cir_transition,
    simulate_ensemble,
    summarize,
    worker_count,
)
from rwkit.measure_change import StepAlpha, TargetSet


def cond_moments(p, y, dt):
    e = math.exp(-p.kappa * dt)
    mean = y * e + p.theta * (1 - e)
    var = y * p.sigma**2 * e * (1 - e) / p.kappa + p.theta * p.sigma**2 * (1 - e) ** 2 / (2 * p.kappa)
    return mean, var


@pytest.fixture(scope="module")
def ens():
    return simulate_ensemble(CirParams.global_scenario(), PathGrid(), 20000, seed=7)


# -- grid --

def test_grid_times_and_lookup():
    g = PathGrid.covering(1.0)
    assert g.n_steps == 52 and g.times[-1] == pytest.approx(1.0)
    assert g.index_of([0.25, 0.5, 1.0]).tolist() == [13, 26, 52]
    with pytest.raises(GridMismatch):
        g.index_of([0.3])
    with pytest.raises(GridMismatch):
        g.index_of([1.5])
    with pytest.raises(GridMismatch):
        PathGrid.covering(1.01)


# -- sampler --

def test_dimension(params):
    assert params.dimension == pytest.approx(3.8807, abs=1e-3)


@pytest.mark.parametrize("dt", [1 / 52, 0.25, 1.0])
def test_transition_moments(params, dt):
    n = 100_000
    rng = _path_rng(11, 0)
    y = sample_cir_transition(np.full(n, params.y0), dt, params, rng)
    mean, var = cond_moments(params, params.y0, dt)
    assert abs(y.mean() - mean) <= 3 * math.sqrt(var / n)
    # SE of the sample variance from the fourth central moment
    m4 = np.mean((y - y.mean()) ** 4)
    assert abs(y.var(ddof=1) - var) <= 3 * math.sqrt((m4 - var**2) / n)


def test_low_dimension_branch_moments():
    p = CirParams(0.5, 0.01, 0.2, 0.04, enforce_feller=False)
    assert p.dimension <= 1
    n = 100_000
    y = sample_cir_transition(np.full(n, p.y0), 0.25, p, _path_rng(3, 0))
    mean, var = cond_moments(p, p.y0, 0.25)
    assert abs(y.mean() - mean) <= 3 * math.sqrt(var / n)


def test_small_sigma_limit():
    p = CirParams(0.5, 0.02, 1e-4, 0.04)
    y = sample_cir_transition(np.full(100_000, p.y0), 1 / 52, p, _path_rng(5, 0))
    assert y.var() < 1e-6
    assert y.mean() == pytest.approx(cond_moments(p, p.y0, 1 / 52)[0], rel=1e-6)


def test_sampler_scalar(params):
    out = sample_cir_transition(0.04, 0.1, params, _path_rng(1, 2))
    assert isinstance(out, float) and out > 0
    with pytest.raises(ValueError):
        sample_cir_transition(0.04, 0.0, params, _path_rng(1, 2))


# -- ensemble --

def test_single_path_reproducible(params):
    a = simulate_ensemble(params, PathGrid(), 1, seed=99)
    b = simulate_ensemble(params, PathGrid(), 1, seed=99)
    assert np.array_equal(a.y, b.y)


def test_worker_independence(params):
    one = simulate_ensemble(params, PathGrid(), 500, seed=3, n_workers=1)
    many = simulate_ensemble(params, PathGrid(), 500, seed=3, n_workers=8)
    assert np.array_equal(one.y, many.y)
    assert not np.array_equal(one.y, simulate_ensemble(params, PathGrid(), 500, seed=4).y)


def test_low_dimension_ensemble_workers():
    p = CirParams(0.5, 0.01, 0.2, 0.04, enforce_feller=False)
    a = simulate_ensemble(p, PathGrid(n_steps=5), 40, seed=3, n_workers=1)
    b = simulate_ensemble(p, PathGrid(n_steps=5), 40, seed=3, n_workers=3)
    assert np.array_equal(a.y, b.y)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("RWKIT_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(5) == 5
    monkeypatch.setenv("RWKIT_THREADS", "0")
    assert worker_count() == 1


def test_ensemble_mean_at_one_year(ens, params):
    mean, _ = cond_moments(params, params.y0, 1.0)
    assert mean == pytest.approx(0.03201, abs=2e-5)
    yT = ens.y[:, -1]
    assert abs(yT.mean() - mean) <= 3 * yT.std(ddof=1) / math.sqrt(yT.size)
    assert np.all(ens.y > 0)
    assert np.all(ens.y[:, 0] == params.y0)


# -- functionals --

def test_rn_functionals_initial_fit(ens, params, curve):
    rn = rn_functionals(ens, params, curve, [1.0, 5.0], time_index=[0, 26])
    expected = curve.cumulative_hazard(np.array([1.0, 5.0]))
    np.testing.assert_allclose(rn.Lambda[:, 0, :], np.broadcast_to(expected, (ens.n_paths, 2)), rtol=1e-12)
    assert np.ptp(rn.Lambda[:, 0, 1]) == 0.0


def test_rn_functionals_affine_dispersion(ens, params, curve):
    rn = rn_functionals(ens, params, curve, [5.0], time_index=[26])
    np.testing.assert_allclose(rn.Lambda[:, 0, 0].std(), rn.B[0, 0] * ens.y[:, 26].std(), rtol=1e-12)
    direct = cirpp.cumulative_hazard(params, curve, 0.5, 5.5, ens.y[:5, 26])
    np.testing.assert_allclose(rn.Lambda[:5, 0, 0], direct, rtol=1e-13)


def test_rn_spreads_below_cap(ens, params, curve):
    rn = rn_functionals(ens, params, curve, [0.25, 1.0, 5.0, 15.0])
    assert np.all(rn.Sp < -math.log(0.4) / rn.maturities)


def test_rn_calibration_stats(ens, params, curve):
    t1 = ens.grid.step
    ts = TargetSet(5.0, [t1, 0.5, 1.0], [0.09, 0.09, 0.09])
    st = rn_calibration_stats(ens, params, curve, ts)
    mean_y = cond_moments(params, params.y0, t1)[0]
    proxy = cirpp.cumulative_hazard(params, curve, t1, t1 + 5.0, mean_y)
    assert abs(st.E_Lambda[0] - proxy) <= 3 * st.se_Lambda[0]
    assert np.all(st.E_sqrt_y < np.sqrt(ens.y[:, ens.grid.index_of(ts.dates)].mean(axis=0)))
    with pytest.raises(GridMismatch):
        rn_calibration_stats(ens, params, curve, TargetSet(5.0, [0.3], [0.09]))


def test_se_halves_with_four_times_paths(params, curve):
    ts = TargetSet(5.0, [1.0], [0.09])
    small = rn_calibration_stats(simulate_ensemble(params, PathGrid(), 5000, 1), params, curve, ts)
    big = rn_calibration_stats(simulate_ensemble(params, PathGrid(), 20000, 1), params, curve, ts)
    assert big.se_Lambda[0] / small.se_Lambda[0] == pytest.approx(0.5, rel=0.2)


def test_rw_identity(ens, params, curve):
    rw = rw_transform_ensemble(ens, params, curve, StepAlpha.zero(), [0.5, 5.0])
    assert np.array_equal(rw.Lambda_star, rw.Lambda)
    assert np.array_equal(rw.Sp_star, rw.Sp)
    assert np.array_equal(rw.intensity_star, rw.intensity)


def test_rw_positive_shift_orders_paths(ens, params, curve):
    alpha = StepAlpha([0.0], [0.05])
    rw = rw_transform_ensemble(ens, params, curve, alpha, [5.0], time_index=[13, 52])
    assert np.all(rw.f > 0)
    assert np.all(rw.Lambda_star > rw.Lambda)


def test_rw_violations_tallied(params, curve):
    e = simulate_ensemble(params, PathGrid(), 200, seed=2)
    rw = rw_transform_ensemble(e, params, curve, StepAlpha([0.0], [-2.0]), [5.0])
    assert rw.violations.sum() > 0
    assert np.array_equal(e.violation_count, rw.violations)


# -- summarize --

def test_summarize_constant():
    s = summarize(np.full((20, 3), 2.5))
    assert np.all(s.mean == 2.5) and np.all(s.q10 == 2.5) and np.all(s.q90 == 2.5)
    assert np.all(s.se == 0)


def test_summarize_type7():
    s = summarize(np.arange(1.0, 11.0))
    assert s.q10 == pytest.approx(1.9) and s.q90 == pytest.approx(9.1)
    with pytest.raises(TooFewPaths):
        summarize(np.arange(9.0))


def test_summarize_symmetric():
    x = np.random.default_rng(0).standard_normal(10_000)
    s = summarize(x)
    assert abs(s.mean - 0.5 * (s.q10 + s.q90)) <= 3 * s.se
    assert s.q10 <= s.mean <= s.q90

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwkit.cirpp import CirParams, cir_lamperti_form
from rwkit.exceptions import (
    DomainViolation,
    GridMismatch,
    InvalidInterval,
    NonPositiveDiffusion,
)
from rwkit.measure_change import StepAlpha
from rwkit.sde_core import (
    Diffusion1D,
    LampertiForm,
    ShiftSpec,
    boundary_v,
    check_one_sided_lipschitz,
    feller_boundary_test,
    kernel_integral,
    lamperti_transform,
    rw_shift_original_scale,
    rw_shift_path,
)

PROBES = np.geomspace(0.1, 1e-6, 11)


def cir_diffusion(p):
    return Diffusion1D(
        drift=lambda y: p.kappa * (p.theta - y),
        diffusion=lambda y: p.sigma * math.sqrt(y),
        initial_value=p.y0,
        domain_lower=0.0,
    )


# -- lamperti_transform --

def test_cir_lamperti_closed_form_drift(params):
    k, th, s = params.kappa, params.theta, params.sigma
    lam = lamperti_transform(cir_diffusion(params), 0.0, forward_map=math.sqrt,
                             inverse_map=lambda x: x * x, noise_scale=s / 2,
                             probe_points=[0.01, 0.1, 1.0])
    for x in (0.05, 0.2, 0.7, 2.0):
        expected = 0.5 * ((k * th - 0.25 * s * s) / x - k * x)
        assert lam.transformed_drift(x) == pytest.approx(expected, rel=1e-8)
    assert lam.noise_scale == pytest.approx(s / 2)


def test_cir_lamperti_numeric_matches_closed_form(params):
    lam = lamperti_transform(cir_diffusion(params), 1.0, noise_scale=params.sigma / 2)
    ref = cir_lamperti_form(params)
    for y in (0.01, 0.04, 0.5, 3.0):
        x = lam.forward_map(y)
        assert x == pytest.approx(math.sqrt(y) - 1.0, abs=1e-10)
        assert lam.inverse_map(x) == pytest.approx(y, abs=1e-10)
        assert lam.transformed_drift(x) == pytest.approx(ref.transformed_drift(math.sqrt(y)), rel=1e-7)
    assert lam.range_lower == pytest.approx(-1.0, abs=1e-8)


def test_additive_noise_is_its_own_lamperti_form():
    d = Diffusion1D(drift=lambda y: -y, diffusion=lambda y: 1.0, initial_value=0.0)
    lam = lamperti_transform(d, 0.0)
    for y in (-3.0, -0.5, 0.0, 1.2, 4.0):
        assert lam.forward_map(y) == pytest.approx(y, abs=1e-12)
        assert lam.transformed_drift(y) == pytest.approx(-y, abs=1e-9)
    assert lam.noise_scale == 1.0


def test_numeric_phi_against_antiderivative():
    d = Diffusion1D(drift=lambda y: 0.0, diffusion=lambda y: 2.0 * math.sqrt(y),
                    initial_value=1.0, domain_lower=0.0)
    lam = lamperti_transform(d, 1.0)
    assert lam.forward_map(4.0) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=1e-3, max_value=50.0))
def test_lamperti_round_trip(y):
    p = CirParams.global_scenario()
    lam = lamperti_transform(cir_diffusion(p), 1.0, noise_scale=p.sigma / 2)
    assert lam.inverse_map(lam.forward_map(y)) == pytest.approx(y, rel=1e-10, abs=1e-10)


def test_non_positive_diffusion_rejected():
    d = Diffusion1D(drift=lambda y: 0.0, diffusion=lambda y: y, initial_value=1.0)
    with pytest.raises(NonPositiveDiffusion):
        lamperti_transform(d, 1.0, probe_points=[-1.0, 1.0])


def test_bad_initial_value():
    with pytest.raises(InvalidInterval):
        Diffusion1D(drift=lambda y: 0.0, diffusion=lambda y: 1.0, initial_value=-1.0,
                    domain_lower=0.0)


def test_sigma_prime_central_difference():
    d = Diffusion1D(drift=lambda y: 0.0, diffusion=lambda y: math.sqrt(y), initial_value=1.0,
                    domain_lower=0.0)
    assert d.sigma_prime(0.25) == pytest.approx(1.0, rel=1e-8)


# -- check_one_sided_lipschitz --

def test_lipschitz_decreasing_function():
    assert check_one_sided_lipschitz(lambda x: -x, (0.01, 10.0), 0.0)


def test_lipschitz_cir_drift(params):
    L = cir_lamperti_form(params).transformed_drift
    assert check_one_sided_lipschitz(L, (0.01, 5.0), 1.0)


def test_lipschitz_square_fails():
    assert not check_one_sided_lipschitz(lambda x: x * x, (0.0, 10.0), 1.0)


def test_lipschitz_bad_interval():
    with pytest.raises(InvalidInterval):
        check_one_sided_lipschitz(lambda x: x, (1.0, 1.0), 0.0)


# -- feller_boundary_test --

def test_feller_holds_on_global_scenario(params):
    assert feller_boundary_test(cir_lamperti_form(params), 0.5, PROBES)


def test_feller_fails_when_violated():
    p = CirParams(0.5138, 0.01497, 0.2, 0.04348, enforce_feller=False)
    assert not p.feller_holds
    assert not feller_boundary_test(cir_lamperti_form(p), 0.5, PROBES)


def test_feller_violated_v_bounded():
    p = CirParams(0.5138, 0.01497, 0.2, 0.04348, enforce_feller=False)
    lam = cir_lamperti_form(p)
    v = [boundary_v(lam, 0.5, x) for x in (1e-3, 1e-5, 1e-7)]
    assert max(v) < 10.0
    assert v[2] - v[1] < 1e-2


def test_feller_brownian_motion():
    bm = LampertiForm(lambda x: 0.0, 1.0, lambda y: y, lambda x: x, 0.0)
    assert not feller_boundary_test(bm, 0.0, np.linspace(-1.0, -10.0, 10))


def test_brownian_v_is_quadratic():
    bm = LampertiForm(lambda x: 0.0, 1.0, lambda y: y, lambda x: x, 0.0)
    assert boundary_v(bm, 0.0, -3.0) == pytest.approx(4.5, rel=1e-9)


def test_feller_probe_validation(params):
    lam = cir_lamperti_form(params)
    with pytest.raises(ValueError):
        feller_boundary_test(lam, 0.5, PROBES[:3])
    with pytest.raises(InvalidInterval):
        feller_boundary_test(lam, 0.5, PROBES[::-1])


# -- rw_shift_path --

TIMES = np.linspace(0.0, 2.0, 101)


def test_shift_zero_alpha_is_identity():
    x = np.sin(TIMES)
    out = rw_shift_path(TIMES, x, ShiftSpec(0.3, StepAlpha.zero()))
    assert np.array_equal(out, x)


def test_shift_constant_alpha(params):
    th, a = 0.5 * params.kappa, 0.07
    x = np.cos(TIMES)
    out = rw_shift_path(TIMES, x, ShiftSpec(th, StepAlpha([0.0], [a])))
    np.testing.assert_allclose(out, x + a * (1 - np.exp(-th * TIMES)), atol=1e-14)
    assert out[0] == x[0]


def test_shift_step_vs_trapezoid():
    alpha = StepAlpha([0.0, 0.8], [0.05, -0.02])
    exact = kernel_integral(ShiftSpec(0.25, alpha), TIMES)
    quad = kernel_integral(ShiftSpec(0.25, lambda u: alpha(u), breakpoints=(0.8,)), TIMES)
    np.testing.assert_allclose(exact, quad, atol=1e-8)


def test_shift_linear_in_alpha():
    a1 = StepAlpha([0.0, 0.5], [0.03, 0.01])
    a2 = StepAlpha([0.0, 0.5], [-0.02, 0.04])
    a12 = StepAlpha([0.0, 0.5], [0.01, 0.05])
    x = np.zeros_like(TIMES)
    s1 = rw_shift_path(TIMES, x, ShiftSpec(0.4, a1))
    s2 = rw_shift_path(TIMES, x, ShiftSpec(0.4, a2))
    s12 = rw_shift_path(TIMES, x, ShiftSpec(0.4, a12))
    np.testing.assert_allclose(s12, s1 + s2, atol=1e-12)


def test_kernel_semigroup():
    alpha = StepAlpha([0.0, 0.3, 1.1], [0.02, -0.01, 0.05])
    th, m, t = 0.3, 0.7, 1.9
    whole = kernel_integral(ShiftSpec(th, alpha), [t])[0]
    head = kernel_integral(ShiftSpec(th, alpha), [m])[0]
    tail = kernel_integral(ShiftSpec(th, alpha, start_time=m), [t])[0]
    assert whole == pytest.approx(math.exp(-th * (t - m)) * head + tail, abs=1e-12)


def test_shift_grid_checks():
    with pytest.raises(GridMismatch):
        rw_shift_path(TIMES[::-1], TIMES, ShiftSpec(0.3, StepAlpha.zero()))
    with pytest.raises(GridMismatch):
        rw_shift_path(TIMES, TIMES, ShiftSpec(0.3, StepAlpha.zero(), horizon=1.0))
    with pytest.raises(GridMismatch):
        rw_shift_path(TIMES, TIMES[:-1], ShiftSpec(0.3, StepAlpha.zero()))


# -- rw_shift_original_scale --

def _const_f_shift(f, th=1.0):
    # alpha chosen so the kernel equals f exactly at t = 1 for a single step
    a = f / (1 - math.exp(-th))
    return ShiftSpec(th, StepAlpha([0.0], [a]))


def test_original_scale_identity(params):
    y = np.full(TIMES.size, 0.04)
    out, bad = rw_shift_original_scale(TIMES, y, cir_lamperti_form(params), ShiftSpec(0.3, StepAlpha.zero()))
    np.testing.assert_array_equal(out, y)
    assert not bad.any()


def test_original_scale_square_root(params):
    t = np.array([0.0, 1.0])
    out, bad = rw_shift_original_scale(t, [0.04, 0.04], cir_lamperti_form(params), _const_f_shift(0.1))
    assert out[1] == pytest.approx(0.09, abs=1e-14)
    assert out[0] == 0.04
    assert not bad.any()


def test_original_scale_violation(params):
    t = np.array([0.0, 1.0])
    lam = cir_lamperti_form(params)
    out, bad = rw_shift_original_scale(t, [0.04, 0.04], lam, _const_f_shift(-0.3))
    assert bad.tolist() == [False, True]
    assert out[1] == pytest.approx(1e-24, rel=1e-6)
    with pytest.raises(DomainViolation):
        rw_shift_original_scale(t, [0.04, 0.04], lam, _const_f_shift(-0.3), strict=True)

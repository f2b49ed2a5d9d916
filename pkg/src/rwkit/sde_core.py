"""Generic one-dimensional diffusion machinery.

Lamperti transformation to additive noise, sampled probes of the
monotonicity and boundary conditions that make the transformed SDE
well-posed, and the pathwise drift shift linking a process to its
real-world counterpart::

    X*_t = X_t + vartheta * int_s^t alpha_u exp(-vartheta (t - u)) du
    Y*_t = phi^{-1}(phi(Y_t) + <same integral>)

Nothing here knows about CIR; :mod:`rwkit.cirpp` plugs its closed forms in.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .exceptions import (
    DomainViolation,
    GridMismatch,
    InvalidInterval,
    NonPositiveDiffusion,
    QuadratureFailure,
)

QUAD_TOL = 1e-10
ROUND_TRIP_TOL = 1e-10
DOMAIN_FLOOR = 1e-12

Func = Callable[[float], float]


@dataclass(frozen=True)
class Diffusion1D:
    """``dY = drift(Y) dt + diffusion(Y) dW`` on ``(domain_lower, +inf)``."""

    drift: Func
    diffusion: Func
    initial_value: float
    domain_lower: float = -math.inf
    diffusion_derivative: Optional[Func] = None

    def __post_init__(self):
        if not self.initial_value > self.domain_lower:
            raise InvalidInterval(
                f"initial value {self.initial_value} is not inside "
                f"({self.domain_lower}, +inf)"
            )

    def sigma_prime(self, x: float) -> float:
        if self.diffusion_derivative is not None:
            return self.diffusion_derivative(x)
        h = max(1e-6, 1e-6 * abs(x))
        # keep the stencil inside the domain
        if x - h <= self.domain_lower:
            h = 0.5 * (x - self.domain_lower)
        return (self.diffusion(x + h) - self.diffusion(x - h)) / (2.0 * h)


@dataclass(frozen=True)
class LampertiForm:
    """Additive-noise form ``dX = L(X) dt + zeta dW`` with ``X = phi(Y)``.

    ``range_lower`` is the infimum of ``phi`` over the original domain (0 for
    the square root). ``drift_antiderivative``, when given, is any
    antiderivative of ``L`` and lets the boundary test skip one level of
    quadrature.
    """

    transformed_drift: Func
    noise_scale: float
    forward_map: Func
    inverse_map: Func
    reference_point: float
    range_lower: float = -math.inf
    drift_antiderivative: Optional[Func] = None

    def __post_init__(self):
        if not self.noise_scale > 0:
            raise NonPositiveDiffusion(f"noise scale must be > 0, got {self.noise_scale}")


@dataclass(frozen=True)
class ShiftSpec:
    """Drift shift ``vartheta * (alpha_t - (X* - X))`` applied from ``start_time``.

    ``alpha`` is either an object exposing ``convolve(vartheta, t, start)``
    (exact, see :class:`rwkit.measure_change.StepAlpha`) or a plain callable
    accepting numpy arrays, integrated by the trapezoid rule.
    ``horizon`` bounds the span on which ``alpha`` is trusted; ``None`` means
    everywhere. ``breakpoints`` lists jump times of a callable ``alpha`` so the
    trapezoid rule never straddles a discontinuity.
    """

    vartheta: float
    alpha: object
    start_time: float = 0.0
    horizon: Optional[float] = None
    quad_intervals: int = 10_000
    breakpoints: tuple = ()

    def __post_init__(self):
        if not math.isfinite(self.vartheta):
            raise ValueError("vartheta must be finite")


def _quad(func, a, b, what="integral"):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(func, a, b, epsabs=QUAD_TOL, epsrel=1e-12, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"{what} on [{a}, {b}] did not converge: {exc}") from exc
    if not math.isfinite(value):
        raise QuadratureFailure(f"{what} on [{a}, {b}] is not finite")
    return value


def _default_probes(diffusion: Diffusion1D, n=64):
    y0 = diffusion.initial_value
    c = diffusion.domain_lower
    if math.isfinite(c):
        gap = y0 - c
        return c + gap * np.geomspace(1e-4, 1e3, n)
    span = max(1.0, abs(y0))
    return y0 + span * np.linspace(-10.0, 10.0, n)


def lamperti_transform(
    diffusion: Diffusion1D,
    reference_point: float,
    forward_map: Optional[Func] = None,
    inverse_map: Optional[Func] = None,
    noise_scale: float = 1.0,
    range_lower: Optional[float] = None,
    drift_antiderivative: Optional[Func] = None,
    probe_points: Optional[Sequence[float]] = None,
) -> LampertiForm:
    """Transform ``diffusion`` to additive noise of size ``noise_scale``.

    With ``phi' = zeta / sigma`` Ito's formula gives
    ``L = zeta * (b / sigma - sigma' / 2)`` evaluated at ``phi^{-1}(x)``.
    Closed-form ``forward_map``/``inverse_map`` are used verbatim when given;
    otherwise ``phi(y) = zeta * int_ref^y dx / sigma(x)`` is computed by
    adaptive quadrature and inverted by bracketing root search.
    """
    probes = np.asarray(
        probe_points if probe_points is not None else _default_probes(diffusion), float
    )
    probes = probes[probes > diffusion.domain_lower]
    for x in probes:
        s = diffusion.diffusion(float(x))
        if not s > 0:
            raise NonPositiveDiffusion(f"diffusion({x}) = {s} is not positive")
    # a closed-form phi may be anchored at the boundary itself (sqrt at 0)
    if not (reference_point > diffusion.domain_lower
            or (forward_map is not None and reference_point == diffusion.domain_lower)):
        raise InvalidInterval("reference point must lie inside the domain")

    zeta = float(noise_scale)

    if forward_map is None:
        def forward_map(y, _ref=reference_point):
            if y == _ref:
                return 0.0
            return zeta * _quad(lambda u: 1.0 / diffusion.diffusion(u), _ref, y, "phi")

    if inverse_map is None:
        inverse_map = _numeric_inverse(forward_map, diffusion.domain_lower, reference_point)

    if range_lower is None:
        if math.isfinite(diffusion.domain_lower):
            try:
                range_lower = forward_map(diffusion.domain_lower)
            except (QuadratureFailure, ZeroDivisionError, ValueError):
                range_lower = -math.inf
        else:
            range_lower = -math.inf

    def transformed_drift(x):
        y = inverse_map(x)
        s = diffusion.diffusion(y)
        return zeta * (diffusion.drift(y) / s - 0.5 * diffusion.sigma_prime(y))

    return LampertiForm(
        transformed_drift=transformed_drift,
        noise_scale=zeta,
        forward_map=forward_map,
        inverse_map=inverse_map,
        reference_point=reference_point,
        range_lower=range_lower,
        drift_antiderivative=drift_antiderivative,
    )


def _numeric_inverse(forward_map, lower, ref):
    def inverse(x):
        if x == 0.0:
            return ref
        step = 1.0
        if x > 0:
            lo, hi = ref, ref + step
            while forward_map(hi) < x:
                lo, step = hi, 2.0 * step
                hi = ref + step
                if step > 1e300:
                    raise DomainViolation(f"{x} is above the range of phi")
        else:
            hi, lo = ref, ref - step
            while True:
                if lo <= lower:
                    lo = 0.5 * (hi + lower) if math.isfinite(lower) else lo
                if forward_map(lo) <= x:
                    break
                hi = lo
                if math.isfinite(lower):
                    lo = 0.5 * (lo + lower)
                    if lo - lower < 1e-300:
                        raise DomainViolation(f"{x} is below the range of phi")
                else:
                    step *= 2.0
                    lo = ref - step
        return optimize.brentq(lambda y: forward_map(y) - x, lo, hi, xtol=1e-14, rtol=1e-15)

    return inverse


def check_one_sided_lipschitz(L: Func, probe_interval, K: float, grid_size: int = 200) -> bool:
    """Sampled falsification of ``L(x') - L(x) <= K (x' - x)`` for ``x <= x'``.

    ``True`` means no counterexample on the grid, not a proof.
    """
    lo, hi = probe_interval
    if not lo < hi:
        raise InvalidInterval(f"empty probe interval ({lo}, {hi})")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    xs = np.linspace(lo, hi, grid_size)
    if lo == 0.0:
        xs[0] = hi * 1e-9
    g = np.array([L(float(x)) for x in xs]) - K * xs
    # all ordered pairs: g(x_j) <= min_{i<=j} g(x_i) + tol
    running_min = np.minimum.accumulate(g)
    return bool(np.all(g <= running_min + 1e-12))


def _drift_integral(lamperti: LampertiForm, d: float):
    """Return ``Lam(y) = int_d^y L``, closed form when available."""
    if lamperti.drift_antiderivative is not None:
        F = lamperti.drift_antiderivative
        Fd = F(d)
        return lambda y: F(y) - Fd
    L = lamperti.transformed_drift
    return lambda y: _quad(L, d, y, "drift integral")


def _v_integrand(lamperti: LampertiForm, d: float):
    """Outer integrand ``y -> int_d^y exp(-(2/zeta^2) int_z^y L) dz`` of ``v``."""
    lam = _drift_integral(lamperti, d)
    k = 2.0 / lamperti.noise_scale**2

    def inner(y):
        lam_y = lam(y)
        return _quad(lambda z: math.exp(k * (lam(z) - lam_y)), d, y, "inner v")

    return inner


def boundary_v(lamperti: LampertiForm, d: float, x: float) -> float:
    """``v(x) = int_d^x int_d^y exp(-(2/zeta^2) int_z^y L) dz dy`` by nested quadrature."""
    return _quad(_v_integrand(lamperti, d), d, x, "outer v")


def feller_boundary_test(
    lamperti: LampertiForm,
    d: float,
    probe_points: Sequence[float],
    threshold: float = 1e6,
    min_probes: int = 5,
) -> bool:
    """Probe whether ``v(x)`` diverges as ``x`` approaches the lower boundary.

    Returns ``True`` iff ``v`` grows strictly along the (strictly decreasing)
    probes and its last value exceeds ``threshold``.
    """
    probes = [float(p) for p in probe_points]
    if len(probes) < min_probes:
        raise ValueError(f"need at least {min_probes} probe points")
    if any(b >= a for a, b in zip(probes, probes[1:])):
        raise InvalidInterval("probe points must be strictly decreasing")
    if probes[0] >= d:
        raise InvalidInterval("probe points must lie below d")

    inner = _v_integrand(lamperti, d)
    # accumulate v segment by segment so each quadrature sees a mild integrand
    values = []
    v = 0.0
    prev = d
    for p in probes:
        v += _quad(inner, prev, p, "outer v")
        values.append(v)
        prev = p
    increasing = all(b > a for a, b in zip(values, values[1:]))
    return bool(increasing and values[-1] > threshold)


def kernel_integral(shift: ShiftSpec, t) -> np.ndarray:
    """``vartheta * int_s^t alpha_u exp(-vartheta (t - u)) du`` at each ``t``."""
    t = np.atleast_1d(np.asarray(t, float))
    s = shift.start_time
    convolve = getattr(shift.alpha, "convolve", None)
    if convolve is not None:
        return np.asarray(convolve(shift.vartheta, t, s), float)
    th = shift.vartheta
    out = np.empty_like(t)
    for j, tj in enumerate(t):
        if tj == s:
            out[j] = 0.0
            continue
        edges = np.unique([s, tj, *(b for b in shift.breakpoints if s < b < tj)])
        total = 0.0
        for a, b in zip(edges, edges[1:]):
            n = max(2, int(round(shift.quad_intervals * (b - a) / (tj - s))))
            # evaluate alpha just inside the segment so jumps land on the right side
            u = np.linspace(a, b, n + 1)
            probe = np.clip(u, a + 1e-13 * (b - a), b - 1e-13 * (b - a))
            vals = np.asarray(shift.alpha(probe), float) * np.broadcast_to(1.0, u.shape)
            total += np.trapezoid(vals * np.exp(-th * (tj - u)), u)
        out[j] = th * total
    return out


def _check_grid(times, shift: ShiftSpec):
    times = np.asarray(times, float)
    if times.ndim != 1 or times.size == 0:
        raise GridMismatch("time grid must be a non-empty 1-d array")
    if np.any(np.diff(times) <= 0):
        raise GridMismatch("time grid must be strictly increasing")
    if times[0] != shift.start_time:
        raise GridMismatch(f"grid starts at {times[0]}, shift starts at {shift.start_time}")
    if shift.horizon is not None and times[-1] > shift.horizon:
        raise GridMismatch(f"alpha covers up to {shift.horizon}, path runs to {times[-1]}")
    return times


def rw_shift_path(times, x_path, shift: ShiftSpec) -> np.ndarray:
    """Shift an additive-noise path: ``X* = X + kernel_integral``."""
    times = _check_grid(times, shift)
    x = np.asarray(x_path, float)
    if x.shape[-1] != times.size:
        raise GridMismatch("path length does not match the time grid")
    f = kernel_integral(shift, times)
    f[0] = 0.0
    return x + f


def rw_shift_original_scale(times, y_path, lamperti: LampertiForm, shift: ShiftSpec, strict=False):
    """Map a path to its shifted counterpart in the original coordinates.

    Returns ``(y_star, violated)`` where ``violated`` flags the points at which
    ``phi(Y) + f`` fell below the range of ``phi``. Those points are floored at
    ``range_lower + 1e-12`` unless ``strict``, in which case
    :class:`DomainViolation` is raised.
    """
    times = _check_grid(times, shift)
    y = np.asarray(y_path, float)
    f = kernel_integral(shift, times)
    f[0] = 0.0
    phi = np.vectorize(lamperti.forward_map, otypes=[float])
    inv = np.vectorize(lamperti.inverse_map, otypes=[float])
    arg = phi(y) + f
    floor = lamperti.range_lower + DOMAIN_FLOOR
    violated = arg < lamperti.range_lower
    if np.any(violated):
        if strict:
            first = int(np.argmax(violated.ravel()))
            raise DomainViolation(f"shifted state left the range of phi at index {first}")
        arg = np.where(violated, floor, arg)
    # an exactly zero shift leaves the state untouched (no round-trip noise)
    y_star = np.where(arg == phi(y), y, inv(arg))
    return y_star, violated

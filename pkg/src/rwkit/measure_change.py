"""Real-world layer for the CIR++ intensity.

With ``vartheta = kappa / 2`` the square-root factor shifts pathwise as
``sqrt(y*) = sqrt(y) + f(t)`` where ``f`` is the exponential-kernel
convolution of a step function ``alpha``. Intensity, cumulative hazard and
spread then move by closed forms, and ``alpha`` is calibrated date by date
so the ensemble mean of the shifted hazard hits a target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cirpp import CirParams, hazard_from_spread
from .exceptions import (
    BadInterval,
    DegenerateState,
    DomainViolation,
    InfeasibleTarget,
    NonPositiveDiscountFactor,
)
from .sde_core import DOMAIN_FLOOR

BP = 1e-4


@dataclass(frozen=True)
class StepAlpha:
    """Right-continuous step function.

    ``alpha(t) = values[i]`` on ``[knot_times[i], knot_times[i+1])``, the last
    value for ``t >= knot_times[-1]`` and 0 before the first knot.
    """

    knot_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knot_times, float)
        vals = np.asarray(self.values, float)
        if knots.ndim != 1 or knots.size == 0 or knots.shape != vals.shape:
            raise ValueError("knot_times and values must be equal-length non-empty 1-d arrays")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knot_times must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("alpha values must be finite")
        object.__setattr__(self, "knot_times", knots)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, start=0.0):
        return cls(np.array([start]), np.array([0.0]))

    def __call__(self, t):
        t = np.asarray(t, float)
        idx = np.searchsorted(self.knot_times, t, side="right") - 1
        return np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 0.0)

    def convolve(self, vartheta, t, start=0.0):
        """Exact ``vartheta * int_start^t alpha(u) exp(-vartheta (t - u)) du``."""
        t = np.atleast_1d(np.asarray(t, float))
        lo = np.maximum(self.knot_times, start)
        hi = np.append(self.knot_times[1:], np.inf)
        a = np.minimum(lo[None, :], t[:, None])
        b = np.minimum(np.maximum(hi[None, :], lo[None, :]), t[:, None])
        # each active step contributes alpha_i (e^{-th (t-b)} - e^{-th (t-a)})
        contrib = np.exp(-vartheta * (t[:, None] - b)) - np.exp(-vartheta * (t[:, None] - a))
        contrib = np.where(b > a, contrib, 0.0)
        return contrib @ self.values


def f_from_alpha(alpha: StepAlpha, kappa: float, t):
    """``f(t) = (kappa/2) int_0^t alpha(u) exp(-(kappa/2)(t - u)) du``."""
    out = alpha.convolve(0.5 * kappa, t, 0.0)
    return out if np.ndim(t) else float(out[0])


def f_recursion_step(f_prev, alpha_i, dt, kappa):
    """Advance ``f`` across one interval on which ``alpha`` equals ``alpha_i``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    decay = math.exp(-0.5 * kappa * dt)
    return decay * f_prev + alpha_i * (-math.expm1(-0.5 * kappa * dt))


def shift_term(y_t, f_t, strict=False):
    """``F = f^2 + 2 f sqrt(y)`` and a mask of points where ``sqrt(y) + f < 0``.

    Violating points are floored so that ``sqrt(y*) = 1e-12`` (``F = y* - y``)
    unless ``strict``, which raises :class:`DomainViolation`.
    """
    y = np.asarray(y_t, float)
    f = np.asarray(f_t, float)
    x = np.sqrt(y)
    violated = x + f < 0
    F = f * f + 2.0 * f * x
    if np.any(violated):
        if strict:
            raise DomainViolation("sqrt(y) + f < 0: shifted factor leaves the positive axis")
        F = np.where(violated, DOMAIN_FLOOR**2 - y, F)
    return F, violated


def shift_intensity(lambda_t, y_t, f_t, strict=False):
    """``lambda* = lambda + f^2 + 2 f sqrt(y)``."""
    F, _ = shift_term(y_t, f_t, strict)
    out = np.asarray(lambda_t, float) + F
    return out if np.ndim(out) else float(out)


def shift_hazard(Lambda, B_tT, y_t, f_t, strict=False):
    """``Lambda* = Lambda + B(t, T) (f^2 + 2 f sqrt(y))``."""
    F, _ = shift_term(y_t, f_t, strict)
    out = np.asarray(Lambda, float) + np.asarray(B_tT, float) * F
    return out if np.ndim(out) else float(out)


def shift_spread(sp, B_tT, y_t, f_t, delta, t, T, strict=False):
    """Spread map ``e^{-tau Sp*} = e^{-BF} [delta (e^{BF} - 1) + e^{-tau Sp}]``."""
    tau = np.asarray(T, float) - np.asarray(t, float)
    if np.any(tau <= 0):
        raise BadInterval("spreads need t < T")
    F, _ = shift_term(y_t, f_t, strict)
    sp = np.asarray(sp, float)
    BF = np.asarray(B_tT, float) * F
    bracket = delta * np.expm1(BF) + np.exp(-tau * np.asarray(sp, float))
    if np.any(bracket <= 0):
        raise NonPositiveDiscountFactor("shifted spread discount factor is not positive")
    out = np.where(BF == 0, sp, (BF - np.log(bracket)) / tau)
    return out if np.ndim(out) else float(out)


def girsanov_kernel(x_t, x_star_t, alpha_t, params: CirParams, variant="minus"):
    """Girsanov integrand ``-(1/sigma)[(kappa theta -/+ sigma^2/4)(1/x* - 1/x) - kappa alpha]``."""
    x = np.asarray(x_t, float)
    xs = np.asarray(x_star_t, float)
    if np.any(x <= 1e-12) or np.any(xs <= 1e-12):
        raise DegenerateState("Girsanov kernel needs x, x* > 1e-12")
    sign = -1.0 if variant == "minus" else 1.0
    a = params.kappa * params.theta + sign * 0.25 * params.sigma**2
    out = -(a * (1.0 / xs - 1.0 / x) - params.kappa * np.asarray(alpha_t, float)) / params.sigma
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class TargetSet:
    """Cumulative-hazard targets ``c_i`` at dates ``t_i`` for a fixed tenor.

    ``target_maturity`` is measured from each date: target ``i`` refers to
    ``Lambda*(t_i, t_i + target_maturity)``.
    """

    target_maturity: float
    dates: np.ndarray
    values: np.ndarray
    source_spreads_bp: Optional[np.ndarray] = None

    def __post_init__(self):
        dates = np.asarray(self.dates, float)
        values = np.asarray(self.values, float)
        if dates.ndim != 1 or dates.size == 0 or dates.shape != values.shape:
            raise ValueError("dates and values must be equal-length non-empty 1-d arrays")
        if np.any(np.diff(dates) <= 0):
            raise ValueError("target dates must be strictly increasing")
        if not self.target_maturity > 0:
            raise ValueError("target maturity must be > 0")
        if np.any(dates >= self.target_maturity):
            raise ValueError("every target date must precede the target maturity")
        if np.any(values < 0):
            raise ValueError("cumulative hazard targets must be >= 0")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_spreads(cls, target_maturity, dates, spreads_bp, delta):
        spreads_bp = np.asarray(spreads_bp, float)
        values = hazard_from_spread(spreads_bp * BP, delta, 0.0, target_maturity)
        return cls(target_maturity, dates, np.atleast_1d(values), spreads_bp)

    def __len__(self):
        return self.dates.size


@dataclass
class AlphaCalibration:
    alpha: StepAlpha
    f_at_knots: np.ndarray
    g: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def calibrate_alpha(targets: TargetSet, E_Lambda, E_sqrt_y, B, kappa, start=0.0) -> AlphaCalibration:
    """Solve ``f_i^2 + 2 f_i m_i = (c_i - E Lambda_i) / B_i`` date by date.

    The root ``f_i = -m_i + sqrt(m_i^2 + g_i)`` is the branch through
    ``f = 0``. Step ``i`` of the returned ``alpha`` spans
    ``[t_{i-1}, t_i)`` with ``t_0 = start``, which is what makes ``f(t_i)``
    reach ``f_i``.
    """
    c = targets.values
    E_Lambda = np.asarray(E_Lambda, float)
    m = np.asarray(E_sqrt_y, float)
    B = np.broadcast_to(np.asarray(B, float), c.shape)
    if E_Lambda.shape != c.shape or m.shape != c.shape:
        raise ValueError("risk-neutral statistics must be given at exactly the target dates")
    if np.any(m <= 0) or np.any(B <= 0):
        raise ValueError("E sqrt(y) and B must be > 0")
    if not start < targets.dates[0]:
        raise ValueError("calibration start must precede the first target date")

    g = (c - E_Lambda) / B
    disc = m * m + g
    bad = np.flatnonzero(disc < 0)
    if bad.size:
        i = int(bad[0])
        floor = E_Lambda[i] - B[i] * m[i] ** 2
        raise InfeasibleTarget(
            f"target {i} (t={targets.dates[i]:.6g}) c={c[i]:.6g} is below the attainable "
            f"minimum {floor:.6g}",
            index=i,
            min_attainable=float(floor),
        )
    f = -m + np.sqrt(disc)

    knots = np.concatenate([[start], targets.dates[:-1]])
    dts = np.diff(np.concatenate([[start], targets.dates]))
    alphas = np.empty_like(f)
    f_prev = 0.0
    for i, (fi, dt) in enumerate(zip(f, dts)):
        decay = math.exp(-0.5 * kappa * dt)
        alphas[i] = (fi - decay * f_prev) / (-math.expm1(-0.5 * kappa * dt))
        f_prev = fi
    alpha = StepAlpha(knots, alphas)
    residual = f * f + 2.0 * f * m - g
    return AlphaCalibration(
        alpha=alpha,
        f_at_knots=f,
        g=g,
        diagnostics={
            "identity_residual_max": float(np.max(np.abs(residual))),
            "expectation_measure": "risk-neutral ensemble",
        },
    )

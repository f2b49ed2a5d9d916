"""Closed-form CIR++ default-intensity analytics.

The intensity is ``lambda(t) = y(t) + psi(t)`` with ``y`` a CIR factor::

    dy = kappa (theta - y) dt + sigma sqrt(y) dW

and ``psi`` the deterministic shift that makes the model reproduce the
initial market survival curve. All functions broadcast over numpy inputs.
Exponentials of ``h (T - t)`` are always taken as ``exp(-h tau)`` so long
tenors cannot overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BadInterval,
    OutsideDomain,
    SeriesDivergence,
    SpreadTooLarge,
)
from .sde_core import LampertiForm

SERIES_RTOL = 1e-14
SERIES_MAX_TERMS = 100_000


@dataclass(frozen=True)
class CirParams:
    """Risk-neutral CIR++ parameters plus the recovery rate.

    ``enforce_feller=False`` admits parameter sets violating ``2 kappa theta
    >= sigma^2``; only the boundary diagnostics need that.
    """

    kappa: float
    theta: float
    sigma: float
    y0: float
    recovery_delta: float = 0.4
    enforce_feller: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        for name in ("kappa", "theta", "sigma", "y0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if not 0.0 <= self.recovery_delta < 1.0:
            raise ValueError(f"recovery_delta must lie in [0, 1), got {self.recovery_delta}")
        if self.enforce_feller and not self.feller_holds:
            raise ValueError(
                f"Feller condition violated: 2*kappa*theta={2 * self.kappa * self.theta:.6g}"
                f" < sigma^2={self.sigma**2:.6g}"
            )

    @property
    def feller_holds(self) -> bool:
        return 2.0 * self.kappa * self.theta >= self.sigma**2

    @property
    def h(self) -> float:
        return math.sqrt(self.kappa**2 + 2.0 * self.sigma**2)

    @property
    def dimension(self) -> float:
        """Degrees of freedom ``4 kappa theta / sigma^2`` of the transition law."""
        return 4.0 * self.kappa * self.theta / self.sigma**2

    @classmethod
    def global_scenario(cls, recovery_delta=0.4):
        """The global-scenario calibration used in the case studies."""
        return cls(kappa=0.5138, theta=0.01497, sigma=0.08904, y0=0.04348,
                   recovery_delta=recovery_delta)


@dataclass(frozen=True)
class BondFactors:
    a_factor: np.ndarray
    b_factor: np.ndarray
    h: float


def _tau(t, T):
    t = np.asarray(t, float)
    T = np.asarray(T, float)
    tau = T - t
    if np.any(tau < 0):
        raise BadInterval("t must not exceed T")
    return tau


def _denominator(params: CirParams, tau):
    # g(tau) * exp(-h tau) with g = 2h + (kappa + h)(exp(h tau) - 1)
    h, k = params.h, params.kappa
    em = np.exp(-h * tau)
    return 2.0 * h * em + (k + h) * (-np.expm1(-h * tau))


def log_a_factor(params: CirParams, tau):
    h, k = params.h, params.kappa
    power = 2.0 * k * params.theta / params.sigma**2
    return power * (math.log(2.0 * h) + 0.5 * (k - h) * tau - np.log(_denominator(params, tau)))


def b_factor(params: CirParams, tau):
    tau = np.asarray(tau, float)
    return 2.0 * (-np.expm1(-params.h * tau)) / _denominator(params, tau)


def bond_factors(params: CirParams, t, T) -> BondFactors:
    """``A(t, T)`` and ``B(t, T)``; both depend on ``T - t`` only."""
    tau = _tau(t, T)
    return BondFactors(np.exp(log_a_factor(params, tau)), b_factor(params, tau), params.h)


def d_e_functions(params: CirParams, t):
    """``D(t) = d/dt ln A(0, t)`` and ``E(t) = d/dt B(0, t)`` in closed form."""
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise BadInterval("t must be >= 0")
    h, k = params.h, params.kappa
    den = _denominator(params, t)  # g(t) e^{-ht}
    power = 2.0 * k * params.theta / params.sigma**2
    D = power * (0.5 * (k + h) - (k + h) * h / den)
    E = 4.0 * h**2 * np.exp(-h * t) / den**2
    return D, E


def psi(params: CirParams, market, t):
    """Deterministic shift ``psi(t) = lambda^m(t) + D(t) - y0 E(t)``."""
    D, E = d_e_functions(params, t)
    return market.instantaneous_hazard(t) + D - params.y0 * E


def log_m_factor(params: CirParams, market, t, T):
    """``ln M(t, T)``: the part of ``ln S(t, T)`` that does not depend on ``y_t``."""
    t = np.asarray(t, float)
    T = np.asarray(T, float)
    tau = _tau(t, T)
    y0 = params.y0
    return (
        -market.cumulative_hazard(T) + market.cumulative_hazard(t)
        + log_a_factor(params, t) - log_a_factor(params, T)
        + (b_factor(params, T) - b_factor(params, t)) * y0
        + log_a_factor(params, tau)
    )


def cumulative_hazard(params: CirParams, market, t, T, y_t):
    """``Lambda(t, T) = -ln M(t, T) + B(t, T) y_t``; affine in ``y_t``."""
    tau = _tau(t, T)
    return -log_m_factor(params, market, t, T) + b_factor(params, tau) * np.asarray(y_t, float)


def survival_probability(params: CirParams, market, t, T, y_t):
    return np.exp(-cumulative_hazard(params, market, t, T, y_t))


def spread_from_hazard(Lambda_star, delta, t, T):
    """``Sp = -ln[delta + (1 - delta) exp(-Lambda)] / (T - t)``."""
    tau = _tau(t, T)
    if np.any(tau <= 0):
        raise BadInterval("spreads need t < T")
    lam = np.asarray(Lambda_star, float)
    return -np.log1p((1.0 - delta) * np.expm1(-lam)) / tau


def hazard_from_spread(sp, delta, t, T):
    """Inverse of :func:`spread_from_hazard`; needs ``sp < -ln(delta) / (T - t)``."""
    tau = _tau(t, T)
    if np.any(tau <= 0):
        raise BadInterval("spreads need t < T")
    sp = np.asarray(sp, float)
    if np.any(sp < 0):
        raise ValueError("spread must be >= 0")
    if delta > 0:
        cap = -math.log(delta) / tau
        if np.any(sp >= cap):
            raise SpreadTooLarge(
                f"spread must stay below -ln(delta)/(T-t) = {np.min(cap) * 1e4:.1f} bp"
            )
    return -np.log1p(np.expm1(-tau * sp) / (1.0 - delta))


def credit_spread(params: CirParams, market, t, T, y_t):
    """Model spread ``Sp(t, T)``; computed through the cumulative hazard."""
    lam = cumulative_hazard(params, market, t, T, y_t)
    return spread_from_hazard(lam, params.recovery_delta, t, T)


def cir_lamperti_form(params: CirParams) -> LampertiForm:
    """Closed-form Lamperti data for the square-root map ``x = sqrt(y)``."""
    k, s = params.kappa, params.sigma
    a = k * params.theta - 0.25 * s**2

    def drift(x):
        return 0.5 * (a / x - k * x)

    def antiderivative(x):
        return 0.5 * (a * math.log(x) - 0.5 * k * x * x)

    return LampertiForm(
        transformed_drift=drift,
        noise_scale=0.5 * s,
        forward_map=math.sqrt,
        inverse_map=lambda x: x * x,
        reference_point=0.0,
        range_lower=0.0,
        drift_antiderivative=antiderivative,
    )


def laplace_domain_boundary(params: CirParams) -> float:
    """Infimum ``-(kappa theta - sigma^2/2)^2 / (2 sigma^2)`` of admissible ``mu``."""
    s2 = params.sigma**2
    return -((params.kappa * params.theta - 0.5 * s2) ** 2) / (2.0 * s2)


def log_hyp1f1(a: float, b: float, x: float) -> float:
    """``ln 1F1(a; b; x)`` for ``a, b, x > 0`` by the Kummer series in log space."""
    if x == 0.0:
        return 0.0
    if a <= 0 or b <= 0 or x < 0:
        raise ValueError("log_hyp1f1 needs a, b, x > 0")
    log_term = 0.0
    log_sum = 0.0
    for n in range(SERIES_MAX_TERMS):
        ratio = (a + n) * x / ((b + n) * (n + 1))
        log_term += math.log(ratio)
        log_sum = np.logaddexp(log_sum, log_term)
        if ratio < 1.0 and log_term - log_sum < math.log(SERIES_RTOL):
            return float(log_sum)
    raise SeriesDivergence(f"1F1({a}; {b}; {x}) did not converge in {SERIES_MAX_TERMS} terms")


def laplace_exponential_inverse_integral(params: CirParams, mu: float, T: float) -> float:
    """``E[exp(-mu int_0^T du / y_u)]`` under the risk-neutral CIR law.

    Finite exactly when ``mu > laplace_domain_boundary(params)``. Evaluated as

        Gamma(c + nu/2 + 1/2) / Gamma(nu + 1) / (y0 delta)^c * beta^(nu/2 + 1/2)
        * exp(kappa/sigma^2 [kappa theta T - 2 y0 / (e^{kappa T} - 1)])
        * 1F1(c + nu/2 + 1/2; nu + 1; beta)

    with ``beta = 2 kappa y0 / (sigma^2 (e^{kappa T} - 1))``, ``c = kappa theta /
    sigma^2``, ``delta = beta e^{kappa T} / y0`` and
    ``nu = (2/sigma^2) sqrt((kappa theta - sigma^2/2)^2 + 2 mu sigma^2)``.
    """
    if mu == 0:
        return 1.0
    boundary = laplace_domain_boundary(params)
    if not mu > boundary:
        raise OutsideDomain(f"mu={mu} is not above the domain boundary {boundary:.6g}")
    if not T > 0:
        raise BadInterval("T must be > 0")
    k, th, s2, y0 = params.kappa, params.theta, params.sigma**2, params.y0
    em1 = math.expm1(k * T)
    beta = 2.0 * k * y0 / (s2 * em1)
    c = k * th / s2
    log_delta = math.log(2.0 * k / s2) + k * T - math.log(em1)
    nu = (2.0 / s2) * math.sqrt((k * th - 0.5 * s2) ** 2 + 2.0 * mu * s2)
    a = c + 0.5 * nu + 0.5
    log_value = (
        math.lgamma(a) - math.lgamma(nu + 1.0)
        - c * (math.log(y0) + log_delta)
        + (0.5 * nu + 0.5) * math.log(beta)
        + (k / s2) * (k * th * T - 2.0 * y0 / em1)
        + log_hyp1f1(a, nu + 1.0, beta)
    )
    return math.exp(log_value)


@dataclass(frozen=True)
class NovikovReport:
    gamma: float
    exponent_mu: float
    domain_boundary: float
    passes: bool
    # whether E[exp(exponent_mu * int 1/y)] itself is finite, i.e. whether
    # -exponent_mu lies inside the transform's domain
    transform_finite: bool


def novikov_check(params: CirParams, variant: str = "minus") -> NovikovReport:
    """Audit numbers for the Novikov argument with ``vartheta = kappa / 2``.

    ``gamma = (kappa theta -/+ sigma^2/4) / sigma`` (``variant`` picks the
    sign) and the exponent is ``2 gamma^2``.
    """
    if variant not in ("minus", "plus"):
        raise ValueError("variant must be 'minus' or 'plus'")
    sign = -1.0 if variant == "minus" else 1.0
    gamma = (params.kappa * params.theta + sign * 0.25 * params.sigma**2) / params.sigma
    mu = 2.0 * gamma**2
    boundary = laplace_domain_boundary(params)
    return NovikovReport(
        gamma=gamma,
        exponent_mu=mu,
        domain_boundary=boundary,
        passes=bool(mu > boundary),
        transform_finite=bool(-mu > boundary),
    )

"""Estimator-style wrapper around the risk-neutral to real-world pipeline.

``fit(dates, targets)`` simulates the risk-neutral ensemble and calibrates the
step function ``alpha``; ``predict(dates)`` returns the ensemble mean of the
shifted cumulative hazard ``Lambda*(t, t + target_maturity)``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .cirpp import CirParams
from .market_curve import MarketCurve, ingest_spread_curve
from .mc_engine import (
    PathGrid,
    RNFunctionals,
    RWFunctionals,
    rn_calibration_stats,
    rn_functionals,
    rw_transform_ensemble,
    simulate_ensemble,
)
from .measure_change import StepAlpha, TargetSet, calibrate_alpha

TARGET_UNITS = ("hazard", "bp")


def _as_dates(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"dates must be a single column, got shape {X.shape}")
        X = X[:, 0]
    return X


class RealWorldCalibrator(BaseEstimator):
    """Calibrate a real-world drift shift for a CIR++ credit intensity.

    Parameters
    ----------
    kappa, theta, sigma, y0 : float
        Risk-neutral CIR factor parameters (defaults: the global-scenario set).
    recovery_delta : float
        Recovery rate used by the spread map.
    curve : MarketCurve or path-like
        Initial market curve; a path is read as a ``tenor_years,spread_bp`` CSV.
    target_maturity : float
        Tenor ``T~`` of the targeted cumulative hazard, measured from each date.
    grid_step, horizon : float
        Simulation grid; every target date must be a grid point.
    n_paths, seed, n_workers :
        Monte Carlo controls. ``n_workers=None`` honours ``RWKIT_THREADS``.
    strict_domain : bool
        Raise instead of flooring when ``sqrt(y) + f < 0`` on some path.
    target_unit : {"hazard", "bp"}
        Whether ``fit``'s ``y`` holds cumulative hazards or spreads in bp.
    """

    def __init__(self, kappa=0.5138, theta=0.01497, sigma=0.08904, y0=0.04348,
                 recovery_delta=0.4, curve=None, target_maturity=5.0, grid_step=1.0 / 52.0,
                 horizon=1.0, n_paths=20000, seed=0, n_workers=None, strict_domain=False,
                 target_unit="hazard"):
        self.kappa = kappa
        self.theta = theta
        self.sigma = sigma
        self.y0 = y0
        self.recovery_delta = recovery_delta
        self.curve = curve
        self.target_maturity = target_maturity
        self.grid_step = grid_step
        self.horizon = horizon
        self.n_paths = n_paths
        self.seed = seed
        self.n_workers = n_workers
        self.strict_domain = strict_domain
        self.target_unit = target_unit

    # -- pieces of fit, exposed so the scenario runner can label stages --

    def _params(self) -> CirParams:
        return CirParams(self.kappa, self.theta, self.sigma, self.y0, self.recovery_delta)

    def _market(self) -> MarketCurve:
        if self.curve is None:
            raise ValueError("a market curve is required")
        if isinstance(self.curve, MarketCurve):
            return self.curve
        return ingest_spread_curve(self.curve, self.recovery_delta)

    def _targets(self, X, y) -> TargetSet:
        dates = _as_dates(X)
        values = column_or_1d(check_array(y, ensure_2d=False, dtype=np.float64))
        if values.shape != dates.shape:
            raise ValueError("dates and targets must have the same length")
        if self.target_unit not in TARGET_UNITS:
            raise ValueError(f"target_unit must be one of {TARGET_UNITS}")
        if self.target_unit == "bp":
            return TargetSet.from_spreads(self.target_maturity, dates, values, self.recovery_delta)
        return TargetSet(self.target_maturity, dates, values)

    def simulate(self):
        """Build the risk-neutral ensemble; the first half of ``fit``."""
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        self.params_ = self._params()
        self.market_ = self._market()
        self.grid_ = PathGrid.covering(self.horizon, self.grid_step)
        self.ensemble_ = simulate_ensemble(self.params_, self.grid_, int(self.n_paths),
                                           int(self.seed), self.n_workers)
        return self

    def calibrate(self, targets: TargetSet):
        """Solve for ``alpha`` against an already simulated ensemble."""
        check_is_fitted(self, "ensemble_")
        self.targets_ = targets
        self.rn_stats_ = rn_calibration_stats(self.ensemble_, self.params_, self.market_, targets)
        self.calibration_ = calibrate_alpha(
            targets, self.rn_stats_.E_Lambda, self.rn_stats_.E_sqrt_y, self.rn_stats_.B,
            self.params_.kappa, start=self.grid_.start,
        )
        self.alpha_ = self.calibration_.alpha
        self.f_at_knots_ = self.calibration_.f_at_knots
        return self

    def fit(self, X, y):
        """Simulate and calibrate so the mean ``Lambda*`` hits ``y`` at dates ``X``."""
        targets = self._targets(X, y)
        self.simulate()
        return self.calibrate(targets)

    # -- post-fit queries --

    def _index(self, X):
        return self.grid_.index_of(_as_dates(X))

    def rn_functionals(self, maturities, X=None) -> RNFunctionals:
        check_is_fitted(self, "ensemble_")
        idx = None if X is None else self._index(X)
        return rn_functionals(self.ensemble_, self.params_, self.market_, maturities, idx)

    def rw_functionals(self, maturities, X=None, alpha: StepAlpha | None = None) -> RWFunctionals:
        """Per-path starred functionals at dates ``X`` (all grid dates by default)."""
        check_is_fitted(self, "alpha_")
        idx = None if X is None else self._index(X)
        return rw_transform_ensemble(self.ensemble_, self.params_, self.market_,
                                     self.alpha_ if alpha is None else alpha,
                                     maturities, idx, strict=self.strict_domain)

    def predict(self, X) -> np.ndarray:
        """Ensemble mean of ``Lambda*(t, t + target_maturity)`` at each date."""
        rw = self.rw_functionals([self.target_maturity], X)
        return rw.Lambda_star[:, :, 0].mean(axis=0)

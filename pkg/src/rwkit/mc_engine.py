"""Exact-transition Monte Carlo for the CIR factor and ensemble functionals.

Every path owns a counter-based Philox stream keyed by ``(seed, path_index)``,
so an ensemble is bit-identical whatever the number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cirpp
from .cirpp import CirParams
from .exceptions import GridMismatch, TooFewPaths
from .measure_change import StepAlpha, TargetSet, f_from_alpha, shift_term

THREADS_ENV = "RWKIT_THREADS"
GRID_TOL = 1e-9


@dataclass(frozen=True)
class PathGrid:
    step: float = 1.0 / 52.0
    n_steps: int = 52
    start: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be > 0")
        if self.n_steps < 1:
            raise ValueError("grid needs at least one step")

    @classmethod
    def covering(cls, horizon, step=1.0 / 52.0, start=0.0):
        n = int(round((horizon - start) / step))
        if n < 1 or abs(start + n * step - horizon) > GRID_TOL:
            raise GridMismatch(f"horizon {horizon} is not a whole number of {step}-year steps")
        return cls(step, n, start)

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.n_steps + 1)

    def index_of(self, dates) -> np.ndarray:
        dates = np.atleast_1d(np.asarray(dates, float))
        idx = np.rint((dates - self.start) / self.step).astype(int)
        if np.any(idx < 0) or np.any(idx > self.n_steps):
            raise GridMismatch("date outside the simulation grid")
        off = np.abs(self.times[idx] - dates)
        if np.any(off > GRID_TOL):
            bad = dates[np.argmax(off)]
            raise GridMismatch(f"date {bad} does not lie on the grid")
        return idx


@dataclass
class Ensemble:
    n_paths: int
    grid: PathGrid
    y: np.ndarray  # (n_paths, n_steps + 1)
    seed: int
    violation_count: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.violation_count is None:
            self.violation_count = np.zeros(self.grid.n_steps + 1, dtype=np.int64)


@dataclass(frozen=True)
class SummaryStats:
    mean: np.ndarray
    se: np.ndarray
    q10: np.ndarray
    q90: np.ndarray


def _path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), index]))


def _transition_constants(params: CirParams, dt: float):
    k, s2 = params.kappa, params.sigma**2
    c = 2.0 * k / (s2 * -math.expm1(-k * dt))
    return c, math.exp(-k * dt), params.dimension


def sample_cir_transition(y_s, dt, params: CirParams, rng: np.random.Generator):
    """Draw ``y_{s+dt}`` given ``y_s`` from the exact noncentral chi-square law.

    ``2c y_t ~ chi'^2(nu, 2c y_s e^{-kappa dt})`` with ``nu = 4 kappa theta /
    sigma^2``. For ``nu > 1`` the draw is ``(Z + sqrt(lam))^2 + chi^2_{nu-1}``,
    otherwise a Poisson mixture of central chi-squares.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    y_s = np.asarray(y_s, float)
    c, decay, nu = _transition_constants(params, dt)
    lam = 2.0 * c * y_s * decay
    if nu > 1.0:
        z = rng.standard_normal(y_s.shape)
        g = rng.gamma(0.5 * (nu - 1.0), 2.0, y_s.shape)
        out = ((z + np.sqrt(lam)) ** 2 + g) / (2.0 * c)
    else:
        k = rng.poisson(0.5 * lam)
        out = rng.gamma(0.5 * nu + k, 2.0) / (2.0 * c)
    return out if np.ndim(out) else float(out)


def worker_count(n_workers=None) -> int:
    if n_workers is None:
        env = os.environ.get(THREADS_ENV)
        n_workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(n_workers))


def _simulate_block(params, grid, seed, lo, hi, out):
    n = grid.n_steps
    c, decay, nu = _transition_constants(params, grid.step)
    if nu > 1.0:
        # the normal and chi-square parts do not depend on the state, so each
        # path draws its whole sequence up front and the recursion vectorises
        z = np.empty((hi - lo, n))
        g = np.empty((hi - lo, n))
        for j, p in enumerate(range(lo, hi)):
            rng = _path_rng(seed, p)
            z[j] = rng.standard_normal(n)
            g[j] = rng.gamma(0.5 * (nu - 1.0), 2.0, n)
        y = out[lo:hi]
        y[:, 0] = params.y0
        for i in range(n):
            lam = 2.0 * c * decay * y[:, i]
            y[:, i + 1] = ((z[:, i] + np.sqrt(lam)) ** 2 + g[:, i]) / (2.0 * c)
    else:
        for p in range(lo, hi):
            rng = _path_rng(seed, p)
            row = out[p]
            row[0] = params.y0
            for i in range(n):
                row[i + 1] = sample_cir_transition(row[i], grid.step, params, rng)


def simulate_ensemble(params: CirParams, grid: PathGrid, n_paths: int, seed: int,
                      n_workers=None) -> Ensemble:
    """Simulate ``n_paths`` factor paths from ``y0`` on ``grid``."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    out = np.empty((n_paths, grid.n_steps + 1))
    workers = min(worker_count(n_workers), n_paths)
    bounds = np.linspace(0, n_paths, workers + 1).astype(int)
    blocks = [(int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]
    if workers == 1:
        for lo, hi in blocks:
            _simulate_block(params, grid, seed, lo, hi, out)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: _simulate_block(params, grid, seed, *b, out), blocks))
    return Ensemble(n_paths=n_paths, grid=grid, y=out, seed=int(seed))


def _select_times(ensemble: Ensemble, time_index):
    if time_index is None:
        time_index = np.arange(ensemble.grid.n_steps + 1)
    time_index = np.atleast_1d(np.asarray(time_index, int))
    return time_index, ensemble.grid.times[time_index]


@dataclass
class RNFunctionals:
    times: np.ndarray
    maturities: np.ndarray
    B: np.ndarray  # (times, maturities)
    Lambda: np.ndarray  # (paths, times, maturities)
    Sp: np.ndarray


def rn_functionals(ensemble: Ensemble, params: CirParams, market, maturities,
                   time_index=None) -> RNFunctionals:
    """Risk-neutral ``Lambda(t, t + m)`` and ``Sp(t, t + m)`` for each path.

    ``maturities`` are tenors measured from each date.
    """
    idx, t = _select_times(ensemble, time_index)
    m = np.atleast_1d(np.asarray(maturities, float))
    if np.any(m <= 0):
        raise ValueError("maturities must be > 0")
    tt = t[:, None]
    TT = tt + m[None, :]
    log_m = cirpp.log_m_factor(params, market, tt, TT)  # (times, mats)
    B = cirpp.b_factor(params, np.broadcast_to(m[None, :], log_m.shape))
    y = ensemble.y[:, idx][:, :, None]
    Lam = -log_m[None] + B[None] * y
    Sp = cirpp.spread_from_hazard(Lam, params.recovery_delta, tt[None], TT[None])
    return RNFunctionals(t, m, B, Lam, Sp)


@dataclass
class CalibrationStats:
    dates: np.ndarray
    E_Lambda: np.ndarray
    E_sqrt_y: np.ndarray
    se_Lambda: np.ndarray
    se_sqrt_y: np.ndarray
    B: np.ndarray


def _mean_se(values):
    n = values.shape[0]
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def rn_calibration_stats(ensemble: Ensemble, params: CirParams, market,
                         targets: TargetSet) -> CalibrationStats:
    """Ensemble means of ``Lambda(t_i, t_i + T~)`` and ``sqrt(y(t_i))``."""
    idx = ensemble.grid.index_of(targets.dates)
    rn = rn_functionals(ensemble, params, market, [targets.target_maturity], idx)
    lam = rn.Lambda[:, :, 0]
    E_L, se_L = _mean_se(lam)
    E_x, se_x = _mean_se(np.sqrt(ensemble.y[:, idx]))
    return CalibrationStats(targets.dates, E_L, E_x, se_L, se_x, rn.B[:, 0])


@dataclass
class RWFunctionals:
    times: np.ndarray
    maturities: np.ndarray
    f: np.ndarray  # (times,)
    Lambda: np.ndarray
    Sp: np.ndarray
    Lambda_star: np.ndarray
    Sp_star: np.ndarray
    intensity: np.ndarray  # (paths, times)
    intensity_star: np.ndarray
    violations: np.ndarray  # (times,) count of floored paths
    negative_hazard: np.ndarray  # (times, maturities) count of Lambda* < 0


def rw_transform_ensemble(ensemble: Ensemble, params: CirParams, market, alpha: StepAlpha,
                          maturities, time_index=None, strict=False) -> RWFunctionals:
    """Shift every path to the real-world measure and recompute the functionals."""
    idx, t = _select_times(ensemble, time_index)
    rn = rn_functionals(ensemble, params, market, maturities, idx)
    f = np.atleast_1d(f_from_alpha(alpha, params.kappa, t))
    y = ensemble.y[:, idx]
    F, violated = shift_term(y, f[None, :], strict)
    lam_star = rn.Lambda + rn.B[None] * F[:, :, None]
    TT = t[:, None] + rn.maturities[None, :]
    sp_star = cirpp.spread_from_hazard(lam_star, params.recovery_delta, t[:, None][None], TT[None])
    psi_t = cirpp.psi(params, market, t)
    intensity = y + psi_t[None, :]
    intensity_star = intensity + F
    counts = violated.sum(axis=0)
    np.add.at(ensemble.violation_count, idx, counts)
    return RWFunctionals(
        times=t,
        maturities=rn.maturities,
        f=f,
        Lambda=rn.Lambda,
        Sp=rn.Sp,
        Lambda_star=lam_star,
        Sp_star=sp_star,
        intensity=intensity,
        intensity_star=intensity_star,
        violations=counts,
        negative_hazard=(lam_star < 0).sum(axis=0),
    )


def summarize(values, quantiles=(0.10, 0.90)) -> SummaryStats:
    """Mean, standard error and type-7 quantiles over the path axis (axis 0)."""
    values = np.asarray(values, float)
    n = values.shape[0]
    if n < 10:
        raise TooFewPaths(f"need at least 10 paths for quantiles, got {n}")
    mean, se = _mean_se(values)
    lo, hi = np.quantile(values, list(quantiles), axis=0, method="linear")
    return SummaryStats(mean, se, lo, hi)

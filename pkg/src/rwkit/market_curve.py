"""Initial market credit curve.

Spreads quoted at a handful of tenors are turned into cumulative hazards
``Lambda^m(0, T)`` through the recovery-adjusted spread map, then
interpolated linearly in ``Lambda^m``. The forward hazard is therefore
piecewise constant and right-continuous at the knots.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .cirpp import hazard_from_spread, spread_from_hazard
from .exceptions import CurveOutOfRange, MonotonicityViolation, ParseError, SpreadTooLarge

CSV_HEADER = ["tenor_years", "spread_bp"]
BP = 1e-4


@dataclass(frozen=True)
class MarketCurve:
    recovery_delta: float
    tenors: np.ndarray
    spreads: np.ndarray  # decimal rates
    hazards: np.ndarray  # Lambda^m(0, tenor)
    as_of_date: str | None = None
    extrapolate: bool = False

    @classmethod
    def from_spreads(cls, tenors, spreads_bp, recovery_delta, as_of_date=None, extrapolate=False):
        tenors = np.asarray(tenors, float)
        spreads = np.asarray(spreads_bp, float) * BP
        if tenors.ndim != 1 or tenors.size == 0 or tenors.shape != spreads.shape:
            raise ParseError("tenors and spreads must be non-empty 1-d arrays of equal length")
        if np.any(tenors <= 0):
            raise ParseError("tenors must be > 0")
        if np.any(np.diff(tenors) <= 0):
            raise ParseError("tenors must be strictly increasing")
        hazards = np.empty_like(tenors)
        for i, (T, sp) in enumerate(zip(tenors, spreads)):
            if sp < 0:
                raise ParseError(f"negative spread at tenor {T}")
            try:
                hazards[i] = hazard_from_spread(sp, recovery_delta, 0.0, T)
            except SpreadTooLarge as exc:
                raise SpreadTooLarge(f"tenor {T}y: {exc}", tenor=float(T)) from None
        steps = np.diff(np.concatenate([[0.0], hazards]))
        bad = np.flatnonzero(steps < 0)
        if bad.size:
            T = tenors[bad[0]]
            raise MonotonicityViolation(
                f"cumulative hazard decreases at tenor {T}y; survival curve would increase"
            )
        for arr in (tenors, spreads, hazards):
            arr.setflags(write=False)
        return cls(recovery_delta, tenors, spreads, hazards, as_of_date, extrapolate)

    @property
    def last_tenor(self) -> float:
        return float(self.tenors[-1])

    def _knots(self):
        return np.concatenate([[0.0], self.tenors]), np.concatenate([[0.0], self.hazards])

    def _check(self, t):
        t = np.asarray(t, float)
        if np.any(t < 0):
            raise CurveOutOfRange("negative time")
        if not self.extrapolate and np.any(t > self.last_tenor * (1 + 1e-12)):
            raise CurveOutOfRange(
                f"t={np.max(t):.6g} beyond the last curve tenor {self.last_tenor}"
            )
        return t

    def _slopes(self):
        x, y = self._knots()
        return np.diff(y) / np.diff(x)

    def cumulative_hazard(self, t):
        """``Lambda^m(0, t)``, linear between knots."""
        t = self._check(t)
        x, y = self._knots()
        out = np.interp(t, x, y)
        if self.extrapolate:
            beyond = t > x[-1]
            if np.any(beyond):
                out = np.where(beyond, y[-1] + self._slopes()[-1] * (t - x[-1]), out)
        return out

    def survival_at(self, t):
        return np.exp(-self.cumulative_hazard(t))

    def instantaneous_hazard(self, t):
        """Forward hazard ``lambda^m(t)``: the slope of the enclosing segment."""
        t = self._check(t)
        x, _ = self._knots()
        slopes = self._slopes()
        # right-limit at interior knots; the last knot uses its left segment
        idx = np.searchsorted(x, t, side="right") - 1
        idx = np.clip(idx, 0, slopes.size - 1)
        return slopes[idx]

    def knot_spreads(self):
        """Re-emit the knot spreads (decimal) from the stored hazards."""
        return spread_from_hazard(self.hazards, self.recovery_delta, 0.0, self.tenors)


def ingest_spread_curve(document, recovery_delta, as_of_date=None, extrapolate=False) -> MarketCurve:
    """Read a ``tenor_years,spread_bp`` CSV (path, file object or text)."""
    if hasattr(document, "read"):
        text = document.read()
    elif isinstance(document, (str, os.PathLike)) and os.path.exists(document):
        with open(document, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(document, str) and "\n" in document:
        text = document
    else:
        raise ParseError(f"curve file not found: {document}")

    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError("empty curve file")
    header = [c.strip() for c in rows[0]]
    if header != CSV_HEADER:
        raise ParseError(f"curve header must be exactly {','.join(CSV_HEADER)}, got {','.join(header)}")
    tenors, spreads = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ParseError(f"line {lineno}: expected 2 columns, got {len(row)}")
        try:
            T, sp = float(row[0]), float(row[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric value {row!r}") from None
        if not (math.isfinite(T) and math.isfinite(sp)):
            raise ParseError(f"line {lineno}: non-finite value")
        tenors.append(T)
        spreads.append(sp)
    if not tenors:
        raise ParseError("curve has no knots")
    return MarketCurve.from_spreads(tenors, spreads, recovery_delta, as_of_date, extrapolate)

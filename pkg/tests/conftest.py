from pathlib import Path

import numpy as np
import pytest

from rwkit.cirpp import CirParams
from rwkit.market_curve import MarketCurve, ingest_spread_curve

DATA = Path(__file__).resolve().parents[1] / "src" / "rwkit" / "data"


def flat_curve(rate=0.02, last=30.0, delta=0.4):
    """Market curve with ``Lambda^m(0, u) = rate * u`` exactly."""
    tenors = np.arange(1.0, last + 1.0)
    hazards = rate * tenors
    spreads = -np.log1p((1 - delta) * np.expm1(-hazards)) / tenors
    return MarketCurve(delta, tenors, spreads, hazards)


@pytest.fixture
def params():
    return CirParams.global_scenario()


@pytest.fixture
def curve():
    return ingest_spread_curve(DATA / "credit_agricole_synthetic.csv", 0.4)


@pytest.fixture
def flat():
    return flat_curve()


@pytest.fixture
def data_dir():
    return DATA

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qngwitness.threshold import ThresholdCurve, threshold_exact


_CURVE_CACHE: dict = {}


def shared_curve(n: int, lo: float = 1e-16, hi: float = 1e-2, points: int = 200) -> ThresholdCurve:
    """Threshold curves are expensive; share them across the whole session."""
    key = (n, lo, hi, points)
    if key not in _CURVE_CACHE:
        grid = np.geomspace(lo, hi, points)
        _CURVE_CACHE[key] = threshold_exact(
            n, grid, allow_extended_range=hi >= 0.5
        )
    return _CURVE_CACHE[key]


@pytest.fixture(scope="session")
def curve_cache():
    return shared_curve


def pytest_addoption(parser):
    parser.addoption(
        "--full-mc",
        action="store_true",
        default=False,
        help="run the 10^7-sample three-mode Monte-Carlo tier",
    )


@pytest.fixture(scope="session")
def full_mc(request):
    return request.config.getoption("--full-mc") or os.environ.get(
        "QNG_FULL_MC", ""
    ) not in ("", "0")
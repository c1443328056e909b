import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from saddle_mle.composite_saddle import UncertainDesign  # noqa: E402


def random_design(model, m, n, rng, sigma=0.1):
    """A small random design of the named model, for unit tests."""
    if model == "rounding":
        H = rng.integers(0, 11, size=(m, n)).astype(float)
        return UncertainDesign.rounding(H, 0.5, sigma)
    if model == "float":
        H = np.round(rng.standard_normal((m, n)) * 10.0 ** rng.integers(0, 3, size=(m, n)), 1)
        H[H == 0] = 0.1
        D = 0.5 * 10.0 ** (np.floor(np.log10(np.abs(H))) - 1)
        return UncertainDesign.floating_point(H, D, sigma)
    if model == "clipping":
        g = rng.laplace(0.0, 0.5, size=(m, n))
        clipped = np.abs(g) >= 2.0
        clipped[0, 0] = True
        clipped[-1, -1] = True
        H = np.where(clipped, 2.0 * np.where(g < 0, -1.0, 1.0), g)
        return UncertainDesign.clipping(H, 2.0, 2.0, sigma, clipped=clipped)
    if model == "gaussian":
        return UncertainDesign.gaussian(rng.normal(0, 10, size=(m, n)), 2.0, sigma)
    raise ValueError(model)


MODELS = ("rounding", "float", "clipping", "gaussian")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(verdicts):
        terminalreporter.write_line(verdicts[k])

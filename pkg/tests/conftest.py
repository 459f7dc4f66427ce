import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    results = acceptance_log.RESULTS
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        desc, passed, detail = results[num]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {num}: {desc} -- {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_fit():
    """A quickly fitted 512-point chair-like shape, shared across modules."""
    from cloudsphere import fitter, geometry, shapes

    target, _ = geometry.normalize_cloud(shapes.chair(512, seed=3))
    config = fitter.FitConfig(centroid_counts=(64, 16), iterations=60, joint_iterations=60, seed=3)
    return target, fitter.fit(target, config)

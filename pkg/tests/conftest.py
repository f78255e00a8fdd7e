import numpy as np
import pytest

from mdfold.encoder import HysteresisParams
from mdfold.experiment import gen_signal
from mdfold.filters import DetectionConfig
from mdfold.lattice import GridSpec, Lattice

BASIS = [[0.97, 0.32], [0.25, 0.95]]
LAM, H, B = 0.3, 0.19, 0.32


def setup_2d(t2=0.01, t1=0.02, dmin=-5.0, dmax=5.0, order=1):
    lattice = Lattice.normalized(BASIS, [t1, t2])
    params = HysteresisParams(LAM, H, B)
    grid = GridSpec.from_domain(lattice, dmin, dmax, B)
    cfg = DetectionConfig.from_params(params, lattice, order)
    return lattice, params, grid, cfg


def setup_sufficient(t2=0.008):
    """A small regime in which every sufficient recovery condition can hold (sup|f| below ~1.17)."""
    lattice = Lattice.normalized(BASIS, [0.02, t2])
    params = HysteresisParams(0.3, 0.15, 0.032)
    grid = GridSpec.from_domain(lattice, -2.0, 2.0, 0.032)
    return lattice, params, grid, DetectionConfig.from_params(params, lattice, 1)


def random_signal(seed, dim=2, domain=(-5.0, 5.0)):
    return gen_signal(np.random.default_rng(seed), dim, (1.0,) * dim, domain)


@pytest.fixture
def sec6():
    return setup_2d()


# ---------------------------------------------------------------- acceptance summary

_CRITERIA: dict[int, str] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    n = int(name.split("_")[2])
    if report.when == "call" or report.outcome != "passed":
        status = "PASS" if report.outcome == "passed" else "FAIL"
        if _CRITERIA.get(n) != "FAIL":
            _CRITERIA[n] = status


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {n}: {_CRITERIA[n]}")

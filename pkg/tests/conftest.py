import numpy as np
import pytest

from vpr_uncertainty.core import DescriptorSet, PoseSet, validate_map


def make_map(values, coords, ids=None):
    values = np.asarray(values, dtype=float)
    ids = ids or [f"r{i:04d}" for i in range(values.shape[0])]
    return validate_map(DescriptorSet(tuple(ids), values), PoseSet(tuple(ids), coords))


@pytest.fixture
def rng():
    return np.random.default_rng(20240417)


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

from risktree import uniform_tree  # noqa: E402


@pytest.fixture
def one_period():
    return uniform_tree([2])


@pytest.fixture
def binary2():
    return uniform_tree([2, 2])


@pytest.fixture
def binary3():
    return uniform_tree([2, 2, 2])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call" and outcome == "passed":
                continue
            name = nodeid.split("::test_criterion_")[1]
            num, _, label = name.partition("_")
            lines.append((int(num), "PASS" if outcome == "passed" else "FAIL", label.replace("_", " ")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, verdict, label in sorted(set(lines)):
            terminalreporter.write_line(f"{verdict} criterion {num}: {label}")

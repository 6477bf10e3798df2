from decimal import Decimal

import pytest

from sepmon.body_model import MEASURED_HUMAN_COMPENSATION, MEASURED_ROBOT_COMPENSATION
from sepmon.naming import HUMAN_KEYPOINTS, ROBOT_KEYPOINTS
from sepmon.policy import SeparationPolicy

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ref_policy():
    return SeparationPolicy(
        Decimal("0.05"), Decimal("0.20"), MEASURED_HUMAN_COMPENSATION, MEASURED_ROBOT_COMPENSATION
    )


@pytest.fixture(scope="session")
def ref_matrices(ref_policy):
    return ref_policy.compile(HUMAN_KEYPOINTS, ROBOT_KEYPOINTS)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

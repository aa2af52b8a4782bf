import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("nearball", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("nearball")

ACCEPTANCE_LINES = []


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{criterion}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def disk_solution():
    from nearball.dirichlet_solver import solve_domain
    from nearball.geometry import unit_disk
    return solve_domain(unit_disk(), K=6, levels=(2, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from msds import chaos, coeff, fem, mesh

settings.register_profile(
    "msds", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("msds")


@pytest.fixture(scope="session")
def fine16():
    return mesh.build_uniform_mesh(16)


@pytest.fixture(scope="session")
def fine32():
    return mesh.build_uniform_mesh(32)


@pytest.fixture(scope="session")
def coarse4():
    return mesh.build_uniform_mesh(4)


@pytest.fixture(scope="session")
def single_case(fine32):
    """1-variable field on a 32x32 mesh with p=3 and its block stiffness."""
    field = coeff.single_variable("example1")
    J = chaos.total_degree_set(1, 3)
    return field, J, fem.assemble_block_stiffness(fine32, field, J)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small(single_case, fine32, coarse4):
    """Coarse 4, fine 32, N_xi=2, two layers."""
    from msds import offline

    field, J, K = single_case
    return field, J, K, offline.build_all(coarse4, fine32, field, J, n_xi=2, layers=2, K=K)


@pytest.fixture(scope="session")
def saturated(single_case, fine32, coarse4):
    from msds import offline

    field, J, K = single_case
    return offline.build_all(coarse4, fine32, field, J, n_xi=2, layers=4, K=K)


CRITERIA = {}


def record(number, passed, detail):
    """Register one acceptance line; printed in the terminal summary."""
    CRITERIA[number] = (passed, detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

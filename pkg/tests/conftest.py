import numpy as np
import pytest
import scipy.sparse
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_sparse(n, density, seed, shift=0.0):
    """Random complex sparse matrix, optionally with a diagonal shift."""
    rng = np.random.default_rng(seed)
    A = scipy.sparse.random(n, n, density=density, random_state=rng, format="csr",
                            dtype=np.complex128,
                            data_rvs=lambda k: rng.standard_normal(k) + 1j * rng.standard_normal(k))
    if shift:
        A = A + shift * scipy.sparse.identity(n, format="csr")
    return scipy.sparse.csr_matrix(A)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.outcome != "passed":
        prev = _ACCEPTANCE.get(name)
        if prev is None or prev[0] == "PASS":
            _ACCEPTANCE[name] = ("PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, secs) in sorted(_ACCEPTANCE.items(),
                                       key=lambda kv: int(kv[0].split("_")[2])):
        terminalreporter.write_line(f"{status}  {name}  ({secs:.1f} s)")

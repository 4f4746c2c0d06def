import numpy as np
import pytest

from stokesdc import assembly, mesh


def pytest_addoption(parser):
    parser.addoption("--quick", action="store_true", default=False,
                     help="reduce run counts in the acceptance suite")


@pytest.fixture(scope="session")
def quick(request):
    return request.config.getoption("--quick")


def build_systems(n, bc):
    grid, spaces = mesh.build_unit_square(n, bc)
    return grid, assembly.assemble(grid, spaces, "q2q1"), assembly.assemble(grid, spaces, "q1isoq2")


@pytest.fixture(scope="session")
def systems():
    """Cached ``(grid, K0 system, K1 system)`` per ``(n, bc)``."""
    cache = {}

    def get(n, bc="dirichlet"):
        if (n, bc) not in cache:
            cache[(n, bc)] = build_systems(n, bc)
        return cache[(n, bc)]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def criterion():
    """Record and assert one acceptance criterion: ``criterion(k, ok, detail)``."""
    def record(k, ok, detail):
        _ACCEPTANCE[k] = (bool(ok), detail)
        print(f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}", flush=True)
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")

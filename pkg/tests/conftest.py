import numpy as np
import pytest

from wentzell.geometry import breathing, build_grid, static_flat


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid8():
    return build_grid(8, 8)


@pytest.fixture
def flat():
    return static_flat(t_max=1.0)


@pytest.fixture
def breath():
    return breathing(amplitude=0.3, omega=2 * np.pi, t_max=1.0)


@pytest.fixture(params=["flat", "breathing"])
def metric(request):
    if request.param == "flat":
        return static_flat(t_max=1.0)
    return breathing(amplitude=0.3, omega=2 * np.pi, t_max=1.0)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; all lines reappear in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        print(line)
        lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

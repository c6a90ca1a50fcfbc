import numpy as np
import pytest

from gslaplace import MarketParams, SpatialGrid, solve_frequency


@pytest.fixture
def market():
    return MarketParams(sigma=0.3, r=0.05, E=50.0, T=1.0)


@pytest.fixture
def coarse_grid():
    # fast enough for unit tests, fine enough for 1e-3 level checks
    return SpatialGrid(-6.0, 6.0, 299)


def manufactured(grid, z=0.8, kappa=1.1):
    x = grid.x
    U = np.sin(x) * np.exp(-0.1 * x * x)
    dU = np.cos(x) * np.exp(-0.1 * x * x) - 0.2 * x * U
    d2U = (-np.sin(x) - 0.2 * x * np.cos(x)) * np.exp(-0.1 * x * x) - 0.2 * U - 0.2 * x * dU
    a = 1.0 + 0.5 * np.cos(x)
    u0 = z * U - a * (d2U + dU) - kappa * dU
    return U, a, u0, z, kappa


def _observed_orders(sizes):
    errs = []
    for n in sizes:
        grid = SpatialGrid(-4.0, 4.0, n)
        U, a, u0, z, kappa = manufactured(grid)
        sol = solve_frequency(grid, z, a, kappa, u0, boundary=(U[0], U[-1]))
        errs.append(np.max(np.abs(sol.values.values - U)))
    return [np.log2(e0 / e1) for e0, e1 in zip(errs, errs[1:])]


@pytest.fixture
def observed_orders():
    """Spatial orders of the node solver measured on a manufactured solution."""
    return _observed_orders


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line per acceptance criterion, then assert it."""
    log = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        log.append(line)
        print(line)
        assert ok, line

    return record


def _criterion_key(line):
    label = line.split("criterion ")[1].split(":")[0]
    digits = "".join(ch for ch in label if ch.isdigit())
    return int(digits), label


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=_criterion_key):
            terminalreporter.write_line(line)

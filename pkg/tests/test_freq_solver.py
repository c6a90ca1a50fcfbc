import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from gslaplace import GridFunction, InvalidArgument, NumericalBreakdown, SpatialGrid, solve_frequency
from gslaplace.freq_solver import (
    discrete_residual,
    is_diagonally_dominant,
    solve_frequency_linear,
    stencil,
    thomas,
)


def test_manufactured_second_order(observed_orders):
    orders = observed_orders([49, 99, 199, 399])
    assert len(orders) == 3
    assert all(1.8 <= q <= 2.2 for q in orders), orders


@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_thomas_matches_banded_solver(n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.uniform(-1, 1, n)
    upper = rng.uniform(-1, 1, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    np.testing.assert_allclose(thomas(lower, diag, upper, rhs), scipy.linalg.solve_banded((1, 1), ab, rhs), rtol=1e-12, atol=1e-12)


def test_thomas_reports_breakdown_row():
    lower = np.array([0.0, 1.0, 1.0])
    diag = np.array([1.0, 1.0, 1.0])
    upper = np.array([1.0, 1.0, 0.0])
    with pytest.raises(NumericalBreakdown) as err:
        thomas(lower, diag, upper, np.ones(3))
    assert err.value.index == 1


def test_residual_vanishes(coarse_grid):
    x = coarse_grid.x
    a = 1.0 + 0.3 * np.sin(x)
    u0 = np.maximum(1 - np.exp(-x), 0)
    sol = solve_frequency(coarse_grid, 1.3, a, 1.1, u0)
    assert np.max(np.abs(discrete_residual(coarse_grid, 1.3, a, 1.1, u0, sol.values))) < 1e-10
    assert sol.values.values[0] == 0.0


def test_linear_is_unit_coefficient(coarse_grid):
    u0 = np.maximum(1 - np.exp(-coarse_grid.x), 0)
    lin = solve_frequency_linear(coarse_grid, 2.0, 1.1, u0)
    ref = solve_frequency(coarse_grid, 2.0, np.ones_like(u0), 1.1, u0)
    assert np.array_equal(lin.values.values, ref.values.values)


def test_stencil_rows_sum_to_z_for_constants(coarse_grid):
    lower, diag, upper = stencil(coarse_grid, 0.5, np.full(coarse_grid.N, 0.7), 1.1)
    np.testing.assert_allclose(lower + diag + upper, 0.5, atol=1e-9)


def test_dominance_check(coarse_grid):
    small = np.full(coarse_grid.N + 2, 1e-4)
    ok = is_diagonally_dominant(coarse_grid, 0.1, small[1:-1], 1.1)
    assert not ok.all()
    assert is_diagonally_dominant(coarse_grid, 0.1, np.ones(coarse_grid.N), 1.1).all()
    with pytest.raises(NumericalBreakdown):
        solve_frequency(coarse_grid, 0.1, small, 1.1, np.zeros(coarse_grid.N + 2), check_dominance=True)


@pytest.mark.parametrize(
    "z,a,u0",
    [
        (0.0, 1.0, 0.0),
        (-1.0, 1.0, 0.0),
        (1.0, np.nan, 0.0),
        (1.0, 1e-9, 0.0),
        (1.0, 1.0, np.inf),
    ],
)
def test_invalid_inputs(coarse_grid, z, a, u0):
    n = coarse_grid.N + 2
    with pytest.raises(InvalidArgument):
        solve_frequency(coarse_grid, z, np.full(n, a), 1.1, np.full(n, u0))


def test_grid_validation():
    with pytest.raises(InvalidArgument):
        SpatialGrid(1.0, 6.0, 10)
    with pytest.raises(InvalidArgument):
        SpatialGrid(-1.0, 1.0, 2)
    g = SpatialGrid(-1.0, 1.0, 9)
    assert g.refined(2).h == pytest.approx(g.h / 2)
    with pytest.raises(InvalidArgument):
        GridFunction(g, np.zeros(3))

import numpy as np
import pytest

from gslaplace import (
    InvalidArgument,
    IterationConfig,
    MarketParams,
    Status,
    direct_solve,
    successive_steps,
    sync_solve,
)


def test_linear_mode_is_direct_method(coarse_grid, market):
    u, rep = sync_solve(market, coarse_grid, 8, linear=True)
    assert rep.status is Status.CONVERGED
    assert rep.iterations == 2
    assert rep.residual_history[-1] == 0.0
    assert np.array_equal(u.values, direct_solve(market, coarse_grid, 8).u.values)


def test_quasilinear_converges(coarse_grid, market):
    u, rep = sync_solve(market, coarse_grid, 6, record_iterates=True)
    assert rep.converged
    assert rep.residual <= 1e-3
    assert len(rep.iterates) == rep.iterations + 1
    assert u.is_finite()


def test_max_iters_status(coarse_grid, market):
    _, rep = sync_solve(market, coarse_grid, 6, cfg=IterationConfig(threshold=1e-14, max_iters=2))
    assert rep.status is Status.MAX_ITERS
    assert rep.iterations == 2


def test_divergence_bound(coarse_grid, market):
    _, rep = sync_solve(market, coarse_grid, 6, cfg=IterationConfig(divergence_bound=0.5))
    assert rep.status is Status.DIVERGED
    assert rep.residual == float("inf")


@pytest.mark.parametrize("kwargs", [dict(threshold=0.0), dict(max_iters=0), dict(max_iters=1.5)])
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgument):
        IterationConfig(**kwargs)


def test_steps_all_converge(coarse_grid, market):
    u, reps = successive_steps(market, coarse_grid, p=6, delta_T=0.1, n=10)
    assert len(reps) == 10
    assert all(r.converged for r in reps)
    assert u.is_finite()


def test_steps_validation(coarse_grid, market):
    with pytest.raises(InvalidArgument):
        successive_steps(market, coarse_grid, n=0)
    with pytest.raises(InvalidArgument):
        successive_steps(market, coarse_grid, delta_T=-0.1)
    with pytest.raises(InvalidArgument):
        successive_steps(market, coarse_grid, method="direct")


def test_single_step_equals_one_shot(coarse_grid):
    m = MarketParams(T=0.5)
    one, _ = sync_solve(m, coarse_grid, 6)
    stepped, reps = successive_steps(m, coarse_grid, p=6, delta_T=0.5, n=1)
    assert np.array_equal(one.values, stepped.values)

"""One-shot Laplace-transform pricing for the constant-volatility equation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsm import MarketParams, payoff, transform_params
from .exceptions import InvalidArgument, OutOfDomain
from .freq_solver import GridFunction, SpatialGrid, solve_frequency
from .stehfest import StehfestWeights, compute_weights, frequency_nodes, invert

__all__ = ["DirectResult", "laplace_step", "direct_solve", "price_at", "check_tau"]


@dataclass
class DirectResult:
    u: GridFunction
    tau: float
    p: int
    node_values: np.ndarray | None = None


def check_tau(tau, tau_max):
    if tau is None:
        return float(tau_max)
    tau = float(tau)
    # tolerate round-off when tau was computed from T
    if not 0 < tau <= tau_max * (1 + 1e-12):
        raise InvalidArgument(f"tau must lie in (0, {tau_max}], got {tau}")
    return tau


def laplace_step(
    grid: SpatialGrid,
    weights: StehfestWeights,
    tau: float,
    a,
    kappa: float,
    u0,
    *,
    tau0: float = 0.0,
    order=None,
    executor=None,
):
    """Solve every node problem for the coefficient ``a`` and invert.

    The node solves are independent; ``order`` permutes the order they are
    run in and ``executor`` (a ``concurrent.futures`` executor) runs them
    concurrently. The reduction always sums in ascending node index.

    Returns ``(u_values, node_values)`` with ``node_values`` of shape
    ``(p, N + 2)``.
    """
    z = frequency_nodes(tau, weights.p).nodes
    idx = list(range(weights.p)) if order is None else list(order)
    if sorted(idx) != list(range(weights.p)):
        raise InvalidArgument("order must be a permutation of the node indices")

    def one(i):
        return solve_frequency(grid, z[i], a, kappa, u0, tau0=tau0).values.values

    stack = np.empty((weights.p, grid.N + 2))
    if executor is None:
        for i in idx:
            stack[i] = one(i)
    else:
        for i, vals in zip(idx, executor.map(one, idx)):
            stack[i] = vals
    return invert(stack, weights, tau), stack


def direct_solve(
    m: MarketParams,
    grid: SpatialGrid | None = None,
    p: int = 12,
    tau: float | None = None,
    *,
    u0=None,
    tau0: float = 0.0,
    keep_nodes: bool = False,
    order=None,
    executor=None,
) -> DirectResult:
    """Price the linear problem at transformed time ``tau`` (default: today).

    Examples
    --------
    >>> res = direct_solve(MarketParams(sigma=0.3, r=0.05, E=100.0, T=1.0), p=12)
    >>> round(price_at(res, 100.0, MarketParams(sigma=0.3, r=0.05, E=100.0, T=1.0)), 2)
    14.23
    """
    grid = grid or SpatialGrid()
    tp = transform_params(m)
    tau = check_tau(tau, tp.tau_max)
    weights = compute_weights(p)
    if u0 is None:
        u0 = payoff(grid.x)
    u0 = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, dtype=float)
    u, stack = laplace_step(
        grid,
        weights,
        tau,
        np.ones(grid.N + 2),
        tp.kappa,
        u0,
        tau0=tau0,
        order=order,
        executor=executor,
    )
    return DirectResult(
        u=GridFunction(grid, u), tau=tau, p=weights.p, node_values=stack if keep_nodes else None
    )


def price_at(result, S, m: MarketParams):
    """Option value ``V = S u(ln(S/E))`` by linear interpolation on the grid.

    ``result`` is anything with a ``.u`` grid function, or a grid function.
    """
    u = result.u if hasattr(result, "u") else result
    grid = u.grid
    S_arr = np.asarray(S, dtype=float)
    if np.any(~(S_arr > 0)):
        raise OutOfDomain("S must be positive")
    x = np.log(S_arr / m.E)
    # admit round-off at the domain ends
    slack = 1e-12 * max(abs(grid.x_min), abs(grid.x_max))
    if np.any((x < grid.x_min - slack) | (x > grid.x_max + slack)):
        raise OutOfDomain(
            f"S outside grid coverage [{m.E * np.exp(grid.x_min):.6g}, "
            f"{m.E * np.exp(grid.x_max):.6g}]"
        )
    V = S_arr * np.interp(x, grid.x, u.values)
    return float(V) if V.ndim == 0 else V

"""Frozen-coefficient fixed-point iteration for the quasilinear equation.

Each sweep freezes the diffusion ratio at the previous iterate, solves all
``p`` node problems, and inverts. The sweep is repeated until the max-norm
change over interior nodes drops to the threshold.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .bsm import MarketParams, diffusion_ratio, payoff, transform_params
from .direct import check_tau, laplace_step
from .exceptions import InvalidArgument, NumericalBreakdown
from .freq_solver import GridFunction, SpatialGrid
from .stehfest import compute_weights

logger = logging.getLogger(__name__)

__all__ = [
    "Status",
    "IterationConfig",
    "ConvergenceReport",
    "coefficient",
    "sync_solve",
    "successive_steps",
]


class Status(str, enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    MAX_ITERS = "max-iters"


@dataclass(frozen=True)
class IterationConfig:
    threshold: float = 1e-3
    max_iters: int = 1000
    divergence_bound: float = 1e6

    def __post_init__(self):
        if not self.threshold > 0:
            raise InvalidArgument(f"threshold must be positive, got {self.threshold}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidArgument(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if not self.divergence_bound > 0:
            raise InvalidArgument("divergence_bound must be positive")


@dataclass
class ConvergenceReport:
    status: Status
    iterations: int
    residual_history: list = field(default_factory=list)
    iterates: list | None = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("inf")


def coefficient(u, x, linear):
    """Frozen diffusion ratio for iterate ``u``; identically one in linear mode."""
    if linear:
        return np.ones_like(x)
    return diffusion_ratio(u, x)


def blown_up(u, bound) -> bool:
    return not np.all(np.isfinite(u)) or float(np.max(np.abs(u))) > bound


def iterate(
    grid: SpatialGrid,
    p: int,
    tau: float,
    kappa: float,
    u0,
    cfg: IterationConfig,
    *,
    linear: bool = False,
    tau0: float = 0.0,
    record_iterates: bool = False,
    executor=None,
):
    weights = compute_weights(p)
    x = grid.x
    u = np.array(u0, dtype=float)
    history = []
    iterates = [u.copy()] if record_iterates else None
    status = Status.MAX_ITERS
    k = 0
    for k in range(1, cfg.max_iters + 1):
        a = coefficient(u, x, linear)
        try:
            new, _ = laplace_step(grid, weights, tau, a, kappa, u0, tau0=tau0, executor=executor)
        except NumericalBreakdown as exc:
            exc.iteration = k
            raise
        if blown_up(new, cfg.divergence_bound):
            history.append(float("inf"))
            status = Status.DIVERGED
            u = new
            break
        res = float(np.max(np.abs(new[1:-1] - u[1:-1])))
        history.append(res)
        u = new
        if record_iterates:
            iterates.append(u.copy())
        if res <= cfg.threshold:
            status = Status.CONVERGED
            break
    logger.debug("sync p=%d tau=%g: %s after %d sweeps", p, tau, status.value, k)
    return u, ConvergenceReport(status, k, history, iterates)


def sync_solve(
    m: MarketParams,
    grid: SpatialGrid | None = None,
    p: int = 6,
    tau: float | None = None,
    cfg: IterationConfig | None = None,
    *,
    linear: bool = False,
    u0=None,
    record_iterates: bool = False,
    executor=None,
):
    """Run the synchronous iteration to transformed time ``tau`` (default: today).

    Returns ``(GridFunction, ConvergenceReport)``. The first iterate is the
    payoff unless ``u0`` is given; ``linear=True`` pins the diffusion ratio
    to one, which makes the second sweep reproduce the first exactly.
    """
    grid = grid or SpatialGrid()
    cfg = cfg or IterationConfig()
    tp = transform_params(m)
    tau = check_tau(tau, tp.tau_max)
    if u0 is None:
        u0 = payoff(grid.x)
    u0 = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, dtype=float)
    u, report = iterate(
        grid,
        p,
        tau,
        tp.kappa,
        u0,
        cfg,
        linear=linear,
        record_iterates=record_iterates,
        executor=executor,
    )
    return GridFunction(grid, u), report


def successive_steps(
    m: MarketParams,
    grid: SpatialGrid | None = None,
    p: int = 6,
    delta_T: float = 0.1,
    n: int = 10,
    cfg: IterationConfig | None = None,
    *,
    method: str = "sync",
    linear: bool = False,
    async_options: dict | None = None,
):
    """March ``n`` subintervals of length ``delta_T`` (in years).

    Each level starts from the previous level's solution. ``method`` is
    ``"sync"`` or ``"async"``; for the latter ``async_options`` is passed to
    :func:`gslaplace.asynchronous.async_solve`. Stepping stops at the first
    diverged level, so fewer than ``n`` reports means the march aborted.

    Returns ``(GridFunction, reports)``; async runs add a third item, the
    list of per-level traces.
    """
    from .asynchronous import run_async

    grid = grid or SpatialGrid()
    cfg = cfg or IterationConfig()
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be an integer >= 1, got {n}")
    if not delta_T > 0:
        raise InvalidArgument(f"delta_T must be positive, got {delta_T}")
    if method not in ("sync", "async"):
        raise InvalidArgument(f"method must be 'sync' or 'async', got {method!r}")
    tp = transform_params(m)
    dtau = m.sigma**2 * delta_T / 2.0
    u = payoff(grid.x)
    reports, traces = [], []
    for step in range(int(n)):
        tau0 = step * dtau
        if method == "sync":
            u, rep = iterate(grid, p, dtau, tp.kappa, u, cfg, linear=linear, tau0=tau0)
        else:
            u, rep, trace = run_async(
                grid, p, dtau, tp.kappa, u, cfg, linear=linear, tau0=tau0, **(async_options or {})
            )
            traces.append(trace)
        reports.append(rep)
        if rep.status is Status.DIVERGED:
            logger.warning("step %d of %d diverged; aborting", step + 1, n)
            break
    out = GridFunction(grid, u)
    if method == "async":
        return out, reports, traces
    return out, reports

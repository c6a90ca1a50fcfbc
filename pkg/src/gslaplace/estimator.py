"""scikit-learn style front end.

``LaplacePricer`` solves the pricing equation once in ``fit`` and prices
``(S, E)`` pairs in ``predict``. The computational solution ``u(x)`` does
not depend on the strike, so one fit serves every strike.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .asynchronous import ActivationPolicy, DelayModel, async_solve
from .bsm import MarketParams
from .direct import direct_solve, price_at
from .exceptions import InvalidArgument
from .freq_solver import SpatialGrid
from .sync import IterationConfig, sync_solve

METHODS = ("direct", "sync", "async")


class LaplacePricer(RegressorMixin, BaseEstimator):
    """European call pricer based on Gaver-Stehfest inversion.

    Parameters
    ----------
    method : {"direct", "sync", "async"}
        ``direct`` forces constant volatility.
    p : int
        Number of Laplace nodes (even, 2..30).
    sigma, r, T : float
        Historical volatility, risk-free rate and maturity in years.
    E : float
        Strike used when ``X`` has a single column of spot prices.
    linear : bool
        Constant volatility for the iterative methods.
    grid_n, x_max : int, float
        Interior node count and half-width of the log-moneyness grid.
    threshold, max_iters : float, int
        Stopping rule of the iterative methods.
    async_mode : {"simulated", "concurrent"}
    delay_D, late, window_W, seed :
        Simulated asynchronous schedule. ``delay_D=0`` means zero delay;
        otherwise a message is late with probability ``late`` (default:
        delays uniform on ``0..delay_D``). ``window_W=None`` means every
        worker is active at every step.

    Attributes
    ----------
    u_ : GridFunction
        Solution at transformed time ``tau_max``, i.e. priced today.
    report_ : ConvergenceReport or None
    trace_ : AsyncTrace or None
    """

    def __init__(
        self,
        method="sync",
        p=6,
        sigma=0.3,
        r=0.05,
        T=1.0,
        E=50.0,
        linear=False,
        grid_n=1199,
        x_max=6.0,
        threshold=1e-3,
        max_iters=1000,
        async_mode="simulated",
        delay_D=0,
        late=None,
        window_W=None,
        seed=None,
    ):
        self.method = method
        self.p = p
        self.sigma = sigma
        self.r = r
        self.T = T
        self.E = E
        self.linear = linear
        self.grid_n = grid_n
        self.x_max = x_max
        self.threshold = threshold
        self.max_iters = max_iters
        self.async_mode = async_mode
        self.delay_D = delay_D
        self.late = late
        self.window_W = window_W
        self.seed = seed

    def _market(self, E=1.0):
        return MarketParams(sigma=self.sigma, r=self.r, E=E, T=self.T)

    def fit(self, X=None, y=None):
        if X is not None:
            self._validate_X(X)
        if self.method not in METHODS:
            raise InvalidArgument(f"method must be one of {METHODS}, got {self.method!r}")
        m = self._market()
        grid = SpatialGrid(-self.x_max, self.x_max, self.grid_n)
        cfg = IterationConfig(threshold=self.threshold, max_iters=self.max_iters)
        self.report_ = None
        self.trace_ = None
        if self.method == "direct":
            self.u_ = direct_solve(m, grid, self.p).u
        elif self.method == "sync":
            self.u_, self.report_ = sync_solve(m, grid, self.p, cfg=cfg, linear=self.linear)
        else:
            delay = DelayModel.bounded(self.seed, self.delay_D, self.late) if self.delay_D else DelayModel.zero()
            activation = (
                ActivationPolicy.window_fair(self.seed, self.window_W)
                if self.window_W
                else ActivationPolicy.all_active()
            )
            self.u_, self.report_, self.trace_ = async_solve(
                m, grid, self.p, cfg=cfg, mode=self.async_mode,
                delay=delay, activation=activation, linear=self.linear,
            )
        return self

    def _validate_X(self, X):
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] == 1:
            X = np.column_stack([X[:, 0], np.full(X.shape[0], float(self.E))])
        elif X.shape[1] != 2:
            raise InvalidArgument(f"X must have columns (S,) or (S, E), got {X.shape[1]}")
        return X

    def predict(self, X):
        """Option values for rows ``(S, E)`` (or ``S`` with the default strike)."""
        check_is_fitted(self, "u_")
        X = self._validate_X(X)
        out = np.empty(X.shape[0])
        for n, (S, E) in enumerate(X):
            out[n] = price_at(self.u_, S, self._market(E))
        return out

    @property
    def converged_(self):
        check_is_fitted(self, "u_")
        return self.report_ is None or self.report_.converged

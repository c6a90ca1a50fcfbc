"""Black-Scholes problem data in financial and computational coordinates.

The computational variables are ``S = E e^x``, ``t = T - 2 tau / sigma^2``
and ``V = S u(x, tau)``; in these the pricing equation becomes a forward
parabolic problem on ``u`` with drift ``kappa = 2 r / sigma^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import InvalidArgument

# keeps the frozen-coefficient problem elliptic where 1 + sin(.) touches 0
DIFFUSION_FLOOR = 1e-6


@dataclass(frozen=True)
class MarketParams:
    sigma: float = 0.3
    r: float = 0.05
    E: float = 50.0
    T: float = 1.0

    def __post_init__(self):
        for name in ("sigma", "r", "E", "T"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidArgument(f"{name} must be finite, got {value}")
        if self.sigma <= 0:
            raise InvalidArgument(f"sigma must be positive, got {self.sigma}")
        if self.E <= 0:
            raise InvalidArgument(f"E must be positive, got {self.E}")
        if self.T <= 0:
            raise InvalidArgument(f"T must be positive, got {self.T}")
        if self.r < 0:
            raise InvalidArgument(f"r must be non-negative, got {self.r}")


@dataclass(frozen=True)
class TransformedParams:
    kappa: float
    tau_max: float


def transform_params(m: MarketParams) -> TransformedParams:
    return TransformedParams(
        kappa=2.0 * m.r / m.sigma**2,
        tau_max=m.T * m.sigma**2 / 2.0,
    )


def to_computational(S, t, m: MarketParams):
    """Map ``(S, t)`` to ``(x, tau)``."""
    S = np.asarray(S, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(~(S > 0)):
        raise InvalidArgument("S must be positive")
    if np.any((t < 0) | (t > m.T)):
        raise InvalidArgument(f"t must lie in [0, T={m.T}]")
    x = np.log(S / m.E)
    tau = m.sigma**2 * (m.T - t) / 2.0
    return _scalar(x), _scalar(tau)


def from_computational(x, tau, u, m: MarketParams):
    """Map ``(x, tau, u)`` back to ``(S, t, V)``."""
    x = np.asarray(x, dtype=float)
    S = m.E * np.exp(x)
    t = m.T - 2.0 * np.asarray(tau, dtype=float) / m.sigma**2
    V = S * np.asarray(u, dtype=float)
    return _scalar(S), _scalar(t), _scalar(V)


def payoff(x):
    """Call payoff in computational form, ``max(1 - e^{-x}, 0)``."""
    x = np.asarray(x, dtype=float)
    return _scalar(np.maximum(-np.expm1(-x), 0.0))


def diffusion_ratio(u, x, floor=DIFFUSION_FLOOR):
    """Ratio ``sigma_tilde(u)^2 / sigma^2 = 1 + sin(pi u e^x)``, floored at ``floor``."""
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(x))):
        raise InvalidArgument("diffusion_ratio needs finite u and x")
    a = 1.0 + np.sin(np.pi * u * np.exp(x))
    return _scalar(np.maximum(a, floor))


def frequency_boundary(z, kappa, x_max, tau0=0.0):
    """Laplace transform of the far-field value ``1 - e^{-kappa (tau0 + s) - x_max}``.

    ``tau0`` shifts the time origin, used when a run restarts from an
    intermediate time level; the left boundary value is identically zero.
    """
    z = float(z)
    if not z > 0:
        raise InvalidArgument(f"z must be positive, got {z}")
    return 1.0 / z - math.exp(-x_max - kappa * tau0) / (z + kappa)


def black_scholes_call(S, E, r, sigma, T):
    """Closed-form European call price, used as the reference for linear runs."""
    S = np.asarray(S, dtype=float)
    vol = sigma * math.sqrt(T)
    with np.errstate(divide="ignore"):
        d1 = (np.log(S / E) + (r + 0.5 * sigma**2) * T) / vol
    d2 = d1 - vol
    return _scalar(S * ndtr(d1) - E * math.exp(-r * T) * ndtr(d2))


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a

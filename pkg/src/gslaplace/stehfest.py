"""Gaver-Stehfest inversion of the Laplace transform.

Weights are generated in exact rational arithmetic and only projected to
floats at the end; the alternating weights grow roughly like ``10**(p/2)``,
so any rounding during their construction would be amplified by the
cancellation in the inversion sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .exceptions import InvalidArgument

LN2 = math.log(2.0)
P_MAX = 30

__all__ = [
    "LN2",
    "P_MAX",
    "StehfestWeights",
    "FrequencyNodes",
    "UnifiedNodes",
    "check_p",
    "compute_weights",
    "frequency_nodes",
    "invert",
    "unified_invert",
    "gaver_stehfest_nodes",
]


def check_p(p) -> int:
    """Validate the number of terms and return it as an ``int``."""
    if isinstance(p, bool) or int(p) != p:
        raise InvalidArgument(f"p must be an integer, got {p!r}")
    p = int(p)
    if p % 2:
        raise InvalidArgument(f"p must be even, got {p}")
    if not 2 <= p <= P_MAX:
        raise InvalidArgument(f"p must lie in [2, {P_MAX}], got {p}")
    return p


@dataclass(frozen=True)
class StehfestWeights:
    p: int
    weights_exact: tuple[Fraction, ...]
    weights_float: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return self.p


@dataclass(frozen=True)
class FrequencyNodes:
    t: float
    nodes: np.ndarray

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class UnifiedNodes:
    """Node/weight pairs of the rational approximation ``e^y ~ sum beta/(alpha - y)``."""

    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float).reshape(-1)
        betas = np.asarray(self.betas, dtype=float).reshape(-1)
        if alphas.shape != betas.shape:
            raise InvalidArgument(
                f"alphas and betas differ in length ({alphas.size} != {betas.size})"
            )
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)

    @property
    def n(self) -> int:
        return self.alphas.size


@lru_cache(maxsize=None)
def _exact_weights(p: int) -> tuple[Fraction, ...]:
    half = p // 2
    fact = math.factorial
    weights = []
    for i in range(1, p + 1):
        total = 0
        for k in range((1 + i) // 2, min(i, half) + 1):
            num = k**half * fact(2 * k)
            den = fact(half - k) * fact(k) * fact(k - 1) * fact(i - k) * fact(2 * k - i)
            total += Fraction(num, den)
        sign = -1 if (half + i) % 2 else 1
        weights.append(sign * Fraction(total))
    if sum(weights) != 0 or sum(w / i for i, w in enumerate(weights, 1)) != 1:
        raise ArithmeticError(f"Stehfest identities fail for p={p}")
    if not all(a * b < 0 for a, b in zip(weights, weights[1:])):
        raise ArithmeticError(f"Stehfest weights do not alternate for p={p}")
    return tuple(weights)


def compute_weights(p: int) -> StehfestWeights:
    """Stehfest weights ``omega_1..omega_p`` for an even number of terms ``p``.

    Parameters
    ----------
    p : int
        Even number of terms, ``2 <= p <= 30``.

    Returns
    -------
    StehfestWeights
        Exact rationals and their float projection.

    Examples
    --------
    >>> [int(w) for w in compute_weights(4).weights_exact]
    [-2, 26, -48, 24]
    """
    p = check_p(p)
    exact = _exact_weights(p)
    floats = np.array([float(w) for w in exact])
    floats.setflags(write=False)
    return StehfestWeights(p=p, weights_exact=exact, weights_float=floats)


def frequency_nodes(t: float, p: int) -> FrequencyNodes:
    """Sample points ``z_i = i ln2 / t`` for ``i = 1..p``."""
    p = check_p(p)
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise InvalidArgument(f"t must be positive and finite, got {t}")
    nodes = np.arange(1, p + 1) * LN2 / t
    nodes.setflags(write=False)
    return FrequencyNodes(t=t, nodes=nodes)


def invert(samples, weights: StehfestWeights, t: float):
    """Evaluate ``(ln2/t) * sum_i omega_i U(z_i)``.

    ``samples`` may be a length-``p`` sequence of scalars or an array whose
    first axis runs over the nodes (e.g. one grid function per node). The
    sum is accumulated in ascending ``i`` so repeated runs are bitwise
    reproducible whatever order the samples were computed in.
    """
    t = float(t)
    if not t > 0:
        raise InvalidArgument(f"t must be positive, got {t}")
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 0 or samples.shape[0] != weights.p:
        raise InvalidArgument(
            f"expected {weights.p} samples, got shape {samples.shape}"
        )
    # beta_i = omega_i ln2, divided by t last: same operation sequence as
    # unified_invert, so the two agree bitwise on the Gaver-Stehfest nodes
    beta = weights.weights_float * LN2
    acc = beta[0] * samples[0]
    for i in range(1, weights.p):
        acc = acc + beta[i] * samples[i]
    out = acc / t
    return float(out) if out.ndim == 0 else out


def gaver_stehfest_nodes(p: int) -> UnifiedNodes:
    """Gaver-Stehfest instance of the unified scheme: ``alpha_i = i ln2``, ``beta_i = omega_i ln2``."""
    w = compute_weights(p)
    return UnifiedNodes(
        alphas=np.arange(1, w.p + 1) * LN2,
        betas=w.weights_float * LN2,
    )


def unified_invert(nodes: UnifiedNodes, sampler: Callable[[float], float], t: float) -> float:
    """Evaluate ``(1/t) * sum_i beta_i U(alpha_i / t)`` for a scalar transform ``U``."""
    t = float(t)
    if not t > 0:
        raise InvalidArgument(f"t must be positive, got {t}")
    if nodes.n == 0:
        return 0.0
    acc = nodes.betas[0] * sampler(nodes.alphas[0] / t)
    for alpha, beta in zip(nodes.alphas[1:], nodes.betas[1:]):
        acc = acc + beta * sampler(alpha / t)
    return float(acc / t)

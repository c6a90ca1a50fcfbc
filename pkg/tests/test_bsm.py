import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gslaplace import (
    InvalidArgument,
    MarketParams,
    black_scholes_call,
    diffusion_ratio,
    frequency_boundary,
    from_computational,
    payoff,
    to_computational,
    transform_params,
)
from gslaplace.bsm import DIFFUSION_FLOOR


def test_transform_params(market):
    tp = transform_params(market)
    assert tp.kappa == pytest.approx(2 * 0.05 / 0.09)
    assert tp.tau_max == pytest.approx(0.09 / 2)


@pytest.mark.parametrize("field,value", [("sigma", 0.0), ("sigma", -1.0), ("E", 0.0), ("T", 0.0), ("r", float("nan"))])
def test_market_validation(field, value):
    kwargs = dict(sigma=0.3, r=0.05, E=50.0, T=1.0)
    kwargs[field] = value
    with pytest.raises(InvalidArgument):
        MarketParams(**kwargs)


@given(st.floats(1.0, 500.0), st.floats(0.0, 0.99), st.floats(0.1, 2.0))
def test_round_trip(S, frac, E):
    m = MarketParams(E=E * 50)
    t = frac * m.T
    x, tau = to_computational(S, t, m)
    u = 0.123
    S2, t2, V = from_computational(x, tau, u, m)
    assert S2 == pytest.approx(S, rel=1e-12)
    assert t2 == pytest.approx(t, abs=1e-12)
    assert V == pytest.approx(u * S, rel=1e-12)


def test_payoff_matches_call_payoff():
    x = np.linspace(-3, 3, 61)
    S = 50.0 * np.exp(x)
    np.testing.assert_allclose(payoff(x) * S, np.maximum(S - 50.0, 0.0), atol=1e-12)


def test_diffusion_ratio_floor():
    # 1 + sin(pi * u e^x) vanishes when u e^x = 3/2
    a = diffusion_ratio(np.array([1.5]), np.array([0.0]))
    assert a[0] == DIFFUSION_FLOOR
    with pytest.raises(InvalidArgument):
        diffusion_ratio(np.array([np.nan]), np.array([0.0]))


@given(st.floats(-5, 5), st.floats(-2, 2))
def test_diffusion_ratio_range(x, u):
    a = diffusion_ratio(np.array([u]), np.array([x]))[0]
    assert DIFFUSION_FLOOR <= a <= 2.0


def test_frequency_boundary_is_transform_of_far_field():
    # far-field u(tau) = 1 - exp(-x - kappa (tau0 + tau)), transform by hand
    z, kappa, xm, tau0 = 0.7, 1.1, 6.0, 0.2
    expected = 1 / z - math.exp(-xm - kappa * tau0) / (z + kappa)
    assert frequency_boundary(z, kappa, xm, tau0) == pytest.approx(expected, rel=1e-15)


def test_black_scholes_known_value():
    assert black_scholes_call(100.0, 100.0, 0.05, 0.2, 1.0) == pytest.approx(10.4506, abs=1e-4)


@given(st.floats(5, 200), st.floats(20, 100), st.floats(0.0, 0.1), st.floats(0.05, 0.8), st.floats(0.05, 5))
def test_black_scholes_bounds(S, E, r, sigma, T):
    V = black_scholes_call(S, E, r, sigma, T)
    assert max(S - E * math.exp(-r * T), 0.0) - 1e-9 <= V <= S

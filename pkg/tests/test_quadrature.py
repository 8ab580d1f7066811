import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from atachic.quadrature import cumtrapz0, l2_norm, tail_weights, trapz


def test_tail_weights_integrate_linears_exactly():
    m = 16
    x = np.linspace(0, 1, m + 1)
    W = tail_weights(m)
    assert np.allclose(W @ (3 * x + 1), 1.5 * (1 - x**2) + (1 - x), atol=1e-14)
    assert not W[m].any()
    assert np.allclose(np.tril(W, -1), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 200))
def test_tail_weights_against_simpson(m):
    x = np.linspace(0, 1, m + 1)
    f = np.exp(np.sin(3 * x))
    tail = tail_weights(m) @ f
    ref = integrate.simpson(f, x=x)
    # trapezoid error ~ h^2/12 * (f'(1) - f'(0)), about 0.55 h^2 here
    assert abs(tail[0] - ref) < 0.7 / m**2
    assert abs(trapz(f, 1 / m) - tail[0]) < 1e-13


def test_cumtrapz_matches_scipy():
    x = np.linspace(0, 1, 41)
    f = np.cos(5 * x)
    ref = integrate.cumulative_trapezoid(f, x, initial=0.0)
    assert np.allclose(cumtrapz0(f, x[1]), ref, atol=1e-15)


def test_l2_norm_stacks_rows():
    x = np.linspace(0, 1, 401)
    v = np.vstack([np.ones_like(x), np.sqrt(3) * x])
    assert abs(l2_norm(v, x[1]) - np.sqrt(2.0)) < 1e-5

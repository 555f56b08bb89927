"""Model catalog consistency: shapes and derivative fields.

Every analytic derivative is cross-checked against central finite
differences at randomized points, so a typo in any coefficient derivative
is caught independently of the estimators that consume it.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filterlab import (ConfigurationError, get_model, get_test_function,
                       list_models, list_test_functions)

_EPS = 1e-6

coords = st.floats(-3.0, 3.0, allow_nan=False)


@pytest.mark.parametrize("name", list_models())
def test_check_shapes(name):
    get_model(name).check_shapes()


def _fd_x(fn, x, y, k, eps=_EPS):
    xp = x.copy()
    xm = x.copy()
    xp[..., k] += eps
    xm[..., k] -= eps
    return (np.asarray(fn(xp, y)) - np.asarray(fn(xm, y))) / (2 * eps)


def _fd_y(fn, x, y, j, eps=_EPS):
    yp = y.copy()
    ym = y.copy()
    yp[..., j] += eps
    ym[..., j] -= eps
    return (np.asarray(fn(x, yp)) - np.asarray(fn(x, ym))) / (2 * eps)


@pytest.mark.parametrize("name", list_models())
@given(xv=coords, yv=coords)
@settings(max_examples=40, deadline=None)
def test_derivatives_match_finite_differences(name, xv, yv):
    model = get_model(name)
    x = np.full((1, model.e), xv)
    y = np.full((1, model.d), yv)
    for k in range(model.e):
        np.testing.assert_allclose(
            model.db_dx(x, y)[0, :, k], _fd_x(model.b, x, y, k)[0],
            atol=1e-6, err_msg=f"{name}.db_dx")
        np.testing.assert_allclose(
            model.dsigma_dx(x, y)[0, :, :, k], _fd_x(model.sigma, x, y, k)[0],
            atol=1e-6, err_msg=f"{name}.dsigma_dx")
        np.testing.assert_allclose(
            model.dv_dx(x, y)[0, :, :, k], _fd_x(model.v, x, y, k)[0],
            atol=1e-6, err_msg=f"{name}.dv_dx")
        np.testing.assert_allclose(
            model.dh_dx(x, y)[0, :, k], _fd_x(model.h, x, y, k)[0],
            atol=1e-6, err_msg=f"{name}.dh_dx")
    for j in range(model.d):
        np.testing.assert_allclose(
            model.dv_dy(x, y)[0, :, :, j], _fd_y(model.v, x, y, j)[0],
            atol=1e-6, err_msg=f"{name}.dv_dy")
        np.testing.assert_allclose(
            model.dh_dy(x, y)[0, :, j], _fd_y(model.h, x, y, j)[0],
            atol=1e-6, err_msg=f"{name}.dh_dy")


@pytest.mark.parametrize("name", list_test_functions())
@given(xv=coords)
@settings(max_examples=30, deadline=None)
def test_test_function_gradients(name, xv):
    g = get_test_function(name)
    x = np.array([[xv]])
    eps = 1e-6
    fd = (g.fn(x + eps) - g.fn(x - eps)) / (2 * eps)
    np.testing.assert_allclose(g.grad(x)[..., 0], fd, atol=1e-6)


def test_standard_model_is_degenerate():
    model = get_model("standard")
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 1))
    y = rng.standard_normal((50, 1))
    assert np.all(model.v(x, y) == 0.0)
    assert np.all(model.dh_dy(x, y) == 0.0)


def test_linear_gaussian_params_consistent():
    model = get_model("linear-gaussian")
    p = model.params
    x = np.array([[1.7]])
    y = np.array([[0.3]])
    assert model.b(x, y)[0, 0] == pytest.approx(p["a"] * 1.7)
    assert model.h(x, y)[0, 0] == pytest.approx(p["c"] * 1.7)
    assert model.sigma(x, y)[0, 0, 0] == pytest.approx(p["sigma"])
    draws = model.x0_sampler(np.random.default_rng(0), 20000)[:, 0]
    assert draws.mean() == pytest.approx(p["m0"], abs=0.02)
    assert draws.var() == pytest.approx(p["p0"], rel=0.05)


def test_unknown_names_raise():
    with pytest.raises(ConfigurationError):
        get_model("nope")
    with pytest.raises(ConfigurationError):
        get_test_function("nope")


def test_vectorized_evaluation_batch_shapes():
    model = get_model("coupled")
    x = np.zeros((4, 5, model.e))
    y = np.zeros((4, 5, model.d))
    assert model.b(x, y).shape == (4, 5, model.e)
    assert model.sigma(x, y).shape == (4, 5, model.e, model.e)
    assert model.v(x, y).shape == (4, 5, model.e, model.d)
    assert model.h(x, y).shape == (4, 5, model.d)

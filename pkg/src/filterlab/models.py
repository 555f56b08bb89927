"""Filtering model catalog.

A :class:`FilterModel` bundles the signal/observation coefficient fields,
their first partial derivatives, and an initial-condition sampler.  All
evaluators are vectorized: ``x`` has shape (..., e), ``y`` shape (..., d),
and outputs carry the batch shape in front.

Shipped models (all with e = d = 1):

* ``linear-gaussian`` -- linear drift, constant diffusion, linear
  observation function; the continuous-time Kalman filter is an exact
  oracle for the conditional mean.
* ``standard`` -- classical setup: signal independent of the observation
  noise (v = 0) and h depending on the signal only.  The asymptotic
  variance of the rescaled filter error degenerates to zero here.
* ``coupled`` -- v != 0 and h depending on both state and observation,
  with bounded smooth coefficients; the generic non-degenerate case.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import ConfigurationError


@dataclass(frozen=True)
class TestFunction:
    """Test function g with its gradient."""

    name: str
    fn: Callable          # x (..., e) -> (...)
    grad: Callable        # x (..., e) -> (..., e)


@dataclass(frozen=True)
class FilterModel:
    """Coefficients of the filtering system and their first derivatives.

    Derivative index conventions (trailing axes):
      db_dx[i, k]       = d b_i / d x_k          (e, e)
      dsigma_dx[i, l, k] = d sigma_il / d x_k    (e, e, e)
      dv_dx[i, l, k]    = d v_il / d x_k         (e, d, e)
      dv_dy[i, l, j]    = d v_il / d y_j         (e, d, d)
      dh_dx[i, k]       = d h_i / d x_k          (d, e)
      dh_dy[i, j]       = d h_i / d y_j          (d, d)
    """

    name: str
    e: int
    d: int
    b: Callable
    sigma: Callable
    v: Callable
    h: Callable
    db_dx: Callable
    dsigma_dx: Callable
    dv_dx: Callable
    dv_dy: Callable
    dh_dx: Callable
    dh_dy: Callable
    x0_sampler: Callable  # (rng, size) -> (size, e)
    state_bound: float = 1e6   # abort threshold on |state|; A1 precludes blow-up
    params: dict = field(default_factory=dict)

    def check_shapes(self) -> None:
        """Evaluate every field at a random point batch and verify shapes."""
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, self.e))
        y = rng.standard_normal((3, self.d))
        expect = {
            "b": (3, self.e),
            "sigma": (3, self.e, self.e),
            "v": (3, self.e, self.d),
            "h": (3, self.d),
            "db_dx": (3, self.e, self.e),
            "dsigma_dx": (3, self.e, self.e, self.e),
            "dv_dx": (3, self.e, self.d, self.e),
            "dv_dy": (3, self.e, self.d, self.d),
            "dh_dx": (3, self.d, self.e),
            "dh_dy": (3, self.d, self.d),
        }
        for name, shape in expect.items():
            out = np.asarray(getattr(self, name)(x, y))
            if out.shape != shape:
                raise ConfigurationError(
                    f"{self.name}.{name}: expected shape {shape}, got {out.shape}")
        x0 = np.asarray(self.x0_sampler(rng, 5))
        if x0.shape != (5, self.e):
            raise ConfigurationError(
                f"{self.name}.x0_sampler: expected shape (5, {self.e}), got {x0.shape}")


# ---------------------------------------------------------------------------
# linear-gaussian: dX = a X dt + s dB,  dY = c X dt + dW
# ---------------------------------------------------------------------------

def _make_linear_gaussian() -> FilterModel:
    a, s, c = -0.5, 0.7, 0.8
    m0, p0 = 0.0, 0.25

    return FilterModel(
        name="linear-gaussian", e=1, d=1,
        b=lambda x, y: a * x,
        sigma=lambda x, y: np.broadcast_to(s, x.shape[:-1] + (1, 1)).copy(),
        v=lambda x, y: np.zeros(x.shape[:-1] + (1, 1)),
        h=lambda x, y: c * x,
        db_dx=lambda x, y: np.broadcast_to(a, x.shape[:-1] + (1, 1)).copy(),
        dsigma_dx=lambda x, y: np.zeros(x.shape[:-1] + (1, 1, 1)),
        dv_dx=lambda x, y: np.zeros(x.shape[:-1] + (1, 1, 1)),
        dv_dy=lambda x, y: np.zeros(x.shape[:-1] + (1, 1, 1)),
        dh_dx=lambda x, y: np.broadcast_to(c, x.shape[:-1] + (1, 1)).copy(),
        dh_dy=lambda x, y: np.zeros(x.shape[:-1] + (1, 1)),
        x0_sampler=lambda rng, size: m0 + np.sqrt(p0) * rng.standard_normal((size, 1)),
        params={"a": a, "sigma": s, "c": c, "m0": m0, "p0": p0},
    )


# ---------------------------------------------------------------------------
# standard: v = 0 and h = h(x); degenerate asymptotic variance
# ---------------------------------------------------------------------------

def _make_standard() -> FilterModel:
    def b(x, y):
        return -0.5 * x

    def sigma(x, y):
        return (0.5 + 0.2 * np.sin(x))[..., None]

    def h(x, y):
        return np.tanh(x)

    return FilterModel(
        name="standard", e=1, d=1,
        b=b, sigma=sigma,
        v=lambda x, y: np.zeros(x.shape[:-1] + (1, 1)),
        h=h,
        db_dx=lambda x, y: np.broadcast_to(-0.5, x.shape[:-1] + (1, 1)).copy(),
        dsigma_dx=lambda x, y: (0.2 * np.cos(x))[..., None, None],
        dv_dx=lambda x, y: np.zeros(x.shape[:-1] + (1, 1, 1)),
        dv_dy=lambda x, y: np.zeros(x.shape[:-1] + (1, 1, 1)),
        dh_dx=lambda x, y: (1.0 - np.tanh(x) ** 2)[..., None],
        dh_dy=lambda x, y: np.zeros(x.shape[:-1] + (1, 1)),
        x0_sampler=lambda rng, size: rng.standard_normal((size, 1)),
    )


# ---------------------------------------------------------------------------
# coupled: v != 0, h depends on both x and y; bounded smooth coefficients
# ---------------------------------------------------------------------------

def _make_coupled() -> FilterModel:
    def b(x, y):
        return -0.5 * x + 0.3 * np.sin(y)

    def sigma(x, y):
        return (0.5 + 0.2 * np.cos(x))[..., None]

    def v(x, y):
        return (0.3 + 0.1 * np.cos(x - y))[..., None]

    def h(x, y):
        return np.tanh(x) + 0.4 * np.sin(y)

    return FilterModel(
        name="coupled", e=1, d=1,
        b=b, sigma=sigma, v=v, h=h,
        db_dx=lambda x, y: np.broadcast_to(-0.5, x.shape[:-1] + (1, 1)).copy(),
        dsigma_dx=lambda x, y: (-0.2 * np.sin(x))[..., None, None],
        dv_dx=lambda x, y: (-0.1 * np.sin(x - y))[..., None, None],
        dv_dy=lambda x, y: (0.1 * np.sin(x - y))[..., None, None],
        dh_dx=lambda x, y: (1.0 - np.tanh(x) ** 2)[..., None],
        dh_dy=lambda x, y: (0.4 * np.cos(y))[..., None],
        x0_sampler=lambda rng, size: 0.5 * rng.standard_normal((size, 1)),
    )


_MODELS = {
    "linear-gaussian": _make_linear_gaussian,
    "standard": _make_standard,
    "coupled": _make_coupled,
}

def _grad_first_coord(x, deriv):
    out = np.zeros_like(x)
    out[..., 0] = deriv
    return out


_TEST_FUNCTIONS = {
    "one": TestFunction(
        "one",
        fn=lambda x: np.ones(x.shape[:-1]),
        grad=lambda x: np.zeros(x.shape)),
    "x": TestFunction(
        "x",
        fn=lambda x: x[..., 0],
        grad=lambda x: _grad_first_coord(x, 1.0)),
    "tanh": TestFunction(
        "tanh",
        fn=lambda x: np.tanh(x[..., 0]),
        grad=lambda x: _grad_first_coord(x, 1.0 - np.tanh(x[..., 0]) ** 2)),
}


def list_models():
    return sorted(_MODELS)


def get_model(name: str) -> FilterModel:
    try:
        return _MODELS[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown model {name!r}; available: {', '.join(list_models())}") from None


def list_test_functions():
    return sorted(_TEST_FUNCTIONS)


def get_test_function(name: str) -> TestFunction:
    try:
        return _TEST_FUNCTIONS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown test function {name!r}; available: "
            f"{', '.join(list_test_functions())}") from None

"""Euler integration: closed-form oracles, coupling and failure handling."""

import numpy as np
import pytest

from filterlab import (IntegrationError, get_model, integrate_euler,
                       integrate_reference, sample_lattice,
                       simulate_observation)
from filterlab.euler import particle_paths
from filterlab.lattice import block_sums
from filterlab.models import FilterModel


def _deterministic_model(a):
    """dX = a X dt with no noise; Euler gives exactly (1 + a/n)^n x0."""
    zeros2 = lambda x, y: np.zeros(x.shape[:-1] + (1, 1))
    zeros3 = lambda x, y: np.zeros(x.shape[:-1] + (1, 1, 1))
    return FilterModel(
        name="ode", e=1, d=1,
        b=lambda x, y: a * x,
        sigma=zeros2, v=zeros2,
        h=lambda x, y: np.zeros(x.shape[:-1] + (1,)),
        db_dx=lambda x, y: np.broadcast_to(a, x.shape[:-1] + (1, 1)).copy(),
        dsigma_dx=zeros3, dv_dx=zeros3, dv_dy=zeros3,
        dh_dx=zeros2, dh_dy=zeros2,
        x0_sampler=lambda rng, size: np.ones((size, 1)))


def test_euler_matches_compound_growth_oracle():
    model = _deterministic_model(a=0.8)
    lat = sample_lattice(1, 1, 256, 0, 0)
    for n in (8, 64, 256):
        traj = integrate_euler(model, lat, n, x0=np.array([1.0]))
        assert traj.states[-1, 0] == pytest.approx((1 + 0.8 / n) ** n)
    # and the Euler endpoint approaches e^a as n grows
    traj = integrate_euler(model, lat, 256, x0=np.array([1.0]))
    assert traj.states[-1, 0] == pytest.approx(np.exp(0.8), rel=2e-3)


def test_reference_is_finest_level():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 128, 5, 0)
    ref = integrate_reference(model, lat)
    direct = integrate_euler(model, lat, 128)
    np.testing.assert_array_equal(ref.states, direct.states)
    assert ref.n == 128


def test_levels_are_coupled_through_block_sums():
    # a pure diffusion dX = dB reproduces B exactly at every level
    zeros2 = lambda x, y: np.zeros(x.shape[:-1] + (1, 1))
    zeros3 = lambda x, y: np.zeros(x.shape[:-1] + (1, 1, 1))
    model = FilterModel(
        name="bm", e=1, d=1,
        b=lambda x, y: np.zeros_like(x),
        sigma=lambda x, y: np.ones(x.shape[:-1] + (1, 1)), v=zeros2,
        h=lambda x, y: np.zeros(x.shape[:-1] + (1,)),
        db_dx=zeros2, dsigma_dx=zeros3, dv_dx=zeros3, dv_dy=zeros3,
        dh_dx=zeros2, dh_dy=zeros2,
        x0_sampler=lambda rng, size: np.zeros((size, 1)))
    lat = sample_lattice(1, 1, 64, 2, 0)
    b_full = lat.b_path()
    for n in (8, 16, 64):
        traj = integrate_euler(model, lat, n, x0=np.array([0.0]))
        np.testing.assert_allclose(traj.states[:, 0],
                                   b_full[:: 64 // n, 0], atol=1e-12)


def test_log_weight_increments_match_trajectory():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 1, 0)
    traj = integrate_euler(model, lat, 16)
    assert traj.log_weight_increments.shape == (16,)
    assert traj.log_weight == pytest.approx(traj.log_weight_increments.sum())


def test_simulate_observation_dynamics():
    model = get_model("linear-gaussian")
    lat = sample_lattice(1, 1, 128, 3, 0)
    x_path, y_path = simulate_observation(model, lat)
    assert x_path.shape == (129, 1) and y_path.shape == (129, 1)
    assert y_path[0, 0] == 0.0
    # reconstruct the observation increments: dY = h(X,Y) dt + dW
    h = model.h(x_path[:-1], y_path[:-1])
    np.testing.assert_allclose(np.diff(y_path, axis=0),
                               h / 128 + lat.dW, atol=1e-12)


def test_integration_error_on_blowup():
    model = _deterministic_model(a=0.0)
    explosive = FilterModel(**{**model.__dict__,
                               "b": lambda x, y: x ** 3,
                               "state_bound": 10.0})
    lat = sample_lattice(1, 1, 32, 0, 0)
    with pytest.raises(IntegrationError):
        integrate_euler(explosive, lat, 32, x0=np.array([3.0]))


def test_particle_paths_match_single_trajectories():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 4, 0)
    y_path = lat.w_path()
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((5, 1))
    dB = rng.standard_normal((5, 64, 1)) / 8.0
    states, failed = particle_paths(model, y_path, x0, dB, 64)
    assert not failed.any()
    assert states.shape == (5, 65, 1)
    # particle 3 equals a hand-rolled scalar Euler recursion
    x = x0[3].copy()
    dY = np.diff(y_path, axis=0)
    for k in range(64):
        xk = x[None, :]
        yk = y_path[k][None, :]
        x = (x + model.b(xk, yk)[0] / 64
             + model.sigma(xk, yk)[0] @ dB[3, k]
             + model.v(xk, yk)[0] @ dY[k])
        np.testing.assert_allclose(states[3, k + 1], x, atol=1e-12)


def test_particle_paths_freeze_failures():
    model = get_model("coupled")
    bounded = FilterModel(**{**model.__dict__, "state_bound": 2.0})
    lat = sample_lattice(1, 1, 32, 4, 0)
    y_path = lat.w_path()
    x0 = np.array([[0.0], [50.0]])      # second particle starts out of bounds
    dB = np.zeros((2, 32, 1))
    states, failed = particle_paths(bounded, y_path, x0, dB, 32)
    assert failed.tolist() == [False, True]
    # the failed particle is frozen at its last finite state, not NaN
    assert np.all(np.isfinite(states))


def test_coarse_and_fine_consume_same_noise():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 6, 0)
    y_path = lat.w_path()
    rng = np.random.default_rng(1)
    x0 = rng.standard_normal((3, 1))
    dB = rng.standard_normal((3, 64, 1)) / 8.0
    fine, _ = particle_paths(model, y_path, x0, dB, 64)
    coarse, _ = particle_paths(model, y_path, x0, block_sums(dB, 8), 8)
    # same start, and the coarse path tracks the fine one pathwise
    np.testing.assert_array_equal(fine[:, 0], coarse[:, 0])
    gap = np.abs(fine[:, ::8, 0] - coarse[:, :, 0]).max()
    assert gap < 1.0

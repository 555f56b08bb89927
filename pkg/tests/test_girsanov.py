"""Girsanov weights and particle estimators."""

import math

import numpy as np
import pytest

from filterlab import (LevelError, SchemeTag, WeightScheme, error_sample,
                       get_model, get_test_function, log_weight,
                       normalized_error_sample, normalized_estimate,
                       rho_estimate, sample_lattice)
from filterlab.euler import brownian_y_path, particle_paths
from filterlab.girsanov import draw_particles
from filterlab.models import FilterModel


def _zero_h_model():
    base = get_model("coupled")
    zero_h = lambda x, y: np.zeros(x.shape[:-1] + (1,))
    zero2 = lambda x, y: np.zeros(x.shape[:-1] + (1, 1))
    return FilterModel(**{**base.__dict__, "h": zero_h,
                          "dh_dx": zero2, "dh_dy": zero2})


def test_zero_h_gives_unit_weight():
    model = _zero_h_model()
    lat = sample_lattice(1, 1, 64, 0, 0)
    traj = np.zeros((65, 1))
    assert log_weight(model, traj, lat.w_path(), 16) == pytest.approx(0.0)
    est = rho_estimate(model, lat, WeightScheme(SchemeTag.REFERENCE), 64, 0,
                       get_test_function("one"))
    assert est.value == pytest.approx(1.0)
    assert est.std_error == pytest.approx(0.0, abs=1e-14)


def test_log_weight_matches_manual_sum():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 1, 0)
    y = lat.w_path()
    rng = np.random.default_rng(0)
    x_path = rng.standard_normal((65, 1))
    n = 16
    total = 0.0
    m = 64 // n
    for k in range(n):
        xk = x_path[k * m][None, :]
        yk = y[k * m][None, :]
        hv = model.h(xk, yk)[0]
        dY = y[(k + 1) * m] - y[k * m]
        total += float(hv @ dY) - 0.5 * float(hv @ hv) / n
    assert log_weight(model, x_path, y, n) == pytest.approx(total)


def test_log_weight_batch_equals_loop():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 2, 0)
    y = lat.w_path()
    rng = np.random.default_rng(1)
    batch = rng.standard_normal((6, 65, 1))
    vec = log_weight(model, batch, y, 8)
    for p in range(6):
        assert vec[p] == pytest.approx(float(log_weight(model, batch[p], y, 8)))


def test_log_weight_mixed_resolutions_agree():
    # freezing a fine path at level n equals weighting its coarse subsample
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 3, 0)
    y = lat.w_path()
    rng = np.random.default_rng(2)
    x_path = rng.standard_normal((65, 1))
    n = 8
    a = log_weight(model, x_path, y, n)
    b = log_weight(model, x_path[:: 64 // n], y[:: 64 // n], n)
    assert a == pytest.approx(float(b))


def test_log_weight_level_and_dimension_errors():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 0, 0)
    x_path = np.zeros((65, 1))
    with pytest.raises(LevelError):
        log_weight(model, x_path, lat.w_path(), 5)
    with pytest.raises(ValueError):
        log_weight(model, np.zeros((65, 2)), lat.w_path(), 8)


def test_weight_scheme_levels():
    assert WeightScheme(SchemeTag.REFERENCE).level(256) == 256
    assert WeightScheme(SchemeTag.SCHEME_I, 16).level(256) == 16
    with pytest.raises(LevelError):
        WeightScheme(SchemeTag.SCHEME_I).level(256)


def test_draw_particles_reproducible_and_scaled():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 256, 4, 1)
    x0a, dBa = draw_particles(model, lat, 100, 7)
    x0b, dBb = draw_particles(model, lat, 100, 7)
    np.testing.assert_array_equal(x0a, x0b)
    np.testing.assert_array_equal(dBa, dBb)
    assert dBa.shape == (100, 256, 1)
    assert abs(dBa.var() * 256 - 1.0) < 0.05


def test_error_sample_level_guard():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 64, 0, 0)
    with pytest.raises(LevelError):
        error_sample(model, lat, get_test_function("tanh"),
                     WeightScheme(SchemeTag.SCHEME_I, 16), 16, 8, 0)


def test_error_sample_couples_particles():
    # with common random numbers the MC error of the difference is far
    # smaller than the MC error of either estimate alone
    model = get_model("coupled")
    g = get_test_function("tanh")
    lat = sample_lattice(1, 1, 512, 5, 0)
    es = error_sample(model, lat, g, WeightScheme(SchemeTag.SCHEME_I, 32), 32,
                      400, 0)
    ref = rho_estimate(model, lat, WeightScheme(SchemeTag.REFERENCE), 400, 0, g)
    assert es.std_error / math.sqrt(32) < 0.3 * ref.std_error


def test_scheme_ii_error_differs_from_scheme_i():
    model = get_model("coupled")
    g = get_test_function("tanh")
    lat = sample_lattice(1, 1, 512, 6, 0)
    e1 = error_sample(model, lat, g, WeightScheme(SchemeTag.SCHEME_I, 32), 32,
                      200, 0)
    e2 = error_sample(model, lat, g, WeightScheme(SchemeTag.SCHEME_II, 32), 32,
                      200, 0)
    assert e1.rescaled != e2.rescaled


def test_normalized_estimate_of_constant_is_one():
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 128, 7, 0)
    est = normalized_estimate(model, lat, WeightScheme(SchemeTag.REFERENCE),
                              50, 0, get_test_function("one"))
    assert est.value == pytest.approx(1.0)
    assert est.std_error == pytest.approx(0.0, abs=1e-14)


def test_normalized_error_sample_zero_for_constant_g():
    # the ratio of the constant function is 1 under every scheme, so the
    # normalized error vanishes identically
    model = get_model("coupled")
    lat = sample_lattice(1, 1, 256, 8, 0)
    es = normalized_error_sample(model, lat, get_test_function("one"),
                                 WeightScheme(SchemeTag.SCHEME_I, 16), 16,
                                 100, 0)
    assert es.rescaled == pytest.approx(0.0, abs=1e-12)


def test_rescaled_error_scaling():
    model = get_model("coupled")
    g = get_test_function("tanh")
    lat = sample_lattice(1, 1, 256, 9, 0)
    es = error_sample(model, lat, g, WeightScheme(SchemeTag.SCHEME_I, 16), 16,
                      64, 0)
    assert es.rescaled == pytest.approx(4.0 * es.raw_error)


def test_particle_paths_shared_between_estimates():
    # same lattice and particle seed give identical reference values even
    # when requested through different entry points
    model = get_model("coupled")
    g = get_test_function("x")
    lat = sample_lattice(1, 1, 128, 10, 0)
    a = rho_estimate(model, lat, WeightScheme(SchemeTag.REFERENCE), 80, 3, g)
    b = rho_estimate(model, lat, WeightScheme(SchemeTag.REFERENCE), 80, 3, g)
    assert a.value == b.value
    x0, dB = draw_particles(model, lat, 80, 3)
    states, failed = particle_paths(model, brownian_y_path(lat), x0, dB, 128)
    assert not failed.any()
    logw = log_weight(model, states, brownian_y_path(lat), 128)
    manual = float(np.mean(g.fn(states[:, -1]) * np.exp(logw)))
    assert a.value == pytest.approx(manual)

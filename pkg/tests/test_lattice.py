"""Lattice generation, coarsening and stream-separation tests."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filterlab import (BrownianLattice, ConfigurationError, LevelError,
                       coarsen, eta, sample_lattice)
from filterlab.lattice import block_sums, stream_rng


def test_deterministic_in_seed_and_path():
    a = sample_lattice(1, 1, 64, 7, 3)
    b = sample_lattice(1, 1, 64, 7, 3)
    np.testing.assert_array_equal(a.dB, b.dB)
    np.testing.assert_array_equal(a.dW, b.dW)
    c = sample_lattice(1, 1, 64, 7, 4)
    assert not np.array_equal(a.dB, c.dB)
    d = sample_lattice(1, 1, 64, 8, 3)
    assert not np.array_equal(a.dW, d.dW)


def test_generation_order_independent():
    # drawing path 5 directly equals drawing paths 0..5 in sequence
    direct = sample_lattice(2, 1, 32, 11, 5)
    for p in range(5):
        sample_lattice(2, 1, 32, 11, p)
    again = sample_lattice(2, 1, 32, 11, 5)
    np.testing.assert_array_equal(direct.dB, again.dB)
    np.testing.assert_array_equal(direct.dW, again.dW)


def test_shapes_and_paths():
    lat = sample_lattice(2, 3, 16, 0, 0)
    assert lat.e == 2 and lat.d == 3
    assert lat.dB.shape == (16, 2) and lat.dW.shape == (16, 3)
    assert lat.times.shape == (17,)
    w = lat.w_path()
    assert w.shape == (17, 3)
    np.testing.assert_allclose(np.diff(w, axis=0), lat.dW)
    assert np.all(w[0] == 0.0)
    b = lat.b_path()
    np.testing.assert_allclose(np.diff(b, axis=0), lat.dB)


def test_bad_configuration():
    with pytest.raises(ConfigurationError):
        sample_lattice(1, 1, 48, 0, 0)      # not a power of two
    with pytest.raises(ConfigurationError):
        sample_lattice(0, 1, 64, 0, 0)
    with pytest.raises(ConfigurationError):
        eta(0, 0.5)


@given(st.integers(1, 64), st.floats(0.0, 1.0, allow_nan=False))
def test_eta_projects_onto_grid(n, t):
    v = eta(n, t)
    assert v <= t + 1e-12
    assert t - v < 1.0 / n + 1e-12


@given(st.integers(0, 6).map(lambda k: 2 ** k), st.floats(0.0, 1.0,
                                                          allow_nan=False))
def test_eta_fixes_dyadic_grid_points(n, t):
    # the library only ever uses dyadic step counts, whose grid points are
    # exactly representable and hence fixed points of the projection
    v = eta(n, t)
    assert eta(n, v) == v


@given(st.integers(0, 5).map(lambda k: 2 ** k))
@settings(max_examples=20)
def test_block_sums_preserve_totals(n):
    rng = np.random.default_rng(0)
    inc = rng.standard_normal((4, 32, 2))
    out = block_sums(inc, n)
    assert out.shape == (4, n, 2)
    np.testing.assert_allclose(out.sum(axis=1), inc.sum(axis=1))


def test_block_sums_match_coarse_path_differences():
    lat = sample_lattice(1, 1, 64, 3, 0)
    coarse_dW = block_sums(lat.dW, 8)
    np.testing.assert_allclose(coarse_dW, np.diff(lat.w_path()[::8], axis=0))


def test_coarsen_returns_block_sums():
    lat = sample_lattice(2, 1, 64, 3, 1)
    dB, dW = coarsen(lat, 16)
    np.testing.assert_array_equal(dB, block_sums(lat.dB, 16))
    np.testing.assert_array_equal(dW, block_sums(lat.dW, 16))


def test_block_sums_level_errors():
    rng = np.random.default_rng(0)
    inc = rng.standard_normal((32, 1))
    with pytest.raises(LevelError):
        block_sums(inc, 5)
    with pytest.raises(LevelError):
        block_sums(inc, 0)


def test_streams_are_separate():
    lat = sample_lattice(1, 1, 16, 9, 2)
    a = lat.x0_rng().standard_normal(8)
    b = lat.particle_rng(0).standard_normal(8)
    c = stream_rng(9, 2, 0).standard_normal(8)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)
    # particle streams keyed by particle seed
    d = lat.particle_rng(1).standard_normal(8)
    assert not np.allclose(b, d)
    # and reproducible
    np.testing.assert_array_equal(b, lat.particle_rng(0).standard_normal(8))


def test_increment_scaling():
    lat = sample_lattice(1, 1, 4096, 0, 0)
    # each increment has variance 1/n_fine; 4096 samples give ~4% precision
    assert abs(lat.dW.var() * 4096 - 1.0) < 0.2

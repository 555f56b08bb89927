"""Girsanov weights and particle estimates of the unnormalized filter.

Under the changed measure the observation path is Brownian and the filter
is the ratio of weighted expectations

    E[g(X_1) | F^Y]  =  rho(g) / rho(1),    rho(g) = E~[g(X_1) Phi_1 | F^Y],

with Phi_1 the stochastic exponential of int h dY - 1/2 int |h|^2 ds.
Weights are accumulated in log domain and only exponentiated at the end.

Three weighting schemes are supported:

* REFERENCE  -- fine-level path with fine-level weight (the proxy for the
  exact pair);
* SCHEME_I   -- fine-level path, weight frozen on the level-n grid
  (Euler on the density only);
* SCHEME_II  -- level-n Euler path with level-n weight (Euler on both the
  state and the density).

Error samples difference the reference and approximate estimates particle
by particle (common random numbers) before averaging.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .euler import brownian_y_path, particle_paths
from .lattice import BrownianLattice, LevelError, block_sums
from .models import FilterModel, TestFunction


class EstimationError(RuntimeError):
    """All particles failed; no estimate available."""


class SchemeTag(Enum):
    REFERENCE = "reference"
    SCHEME_I = "scheme-i"
    SCHEME_II = "scheme-ii"


@dataclass(frozen=True)
class WeightScheme:
    """Weighting scheme plus the discretization level it acts at."""

    tag: SchemeTag
    n: Optional[int] = None  # ignored for REFERENCE

    def level(self, n_fine: int) -> int:
        if self.tag is SchemeTag.REFERENCE:
            return n_fine
        if self.n is None:
            raise LevelError(f"{self.tag.value} requires an explicit level n")
        return self.n


@dataclass(frozen=True)
class ParticleEstimate:
    value: float
    std_error: float
    M: int
    failures: int


def log_weight(model: FilterModel, x_path: np.ndarray, y_path: np.ndarray,
               n: int) -> np.ndarray:
    """log Phi-bar_1^n(U, V) with integrands frozen on the level-n grid.

    ``x_path`` has shape (..., m_x + 1, e) and ``y_path`` (m_y + 1, d); n
    must divide both grid sizes.  The Ito integral of a piecewise-constant
    integrand is an exact sum, so no finer resolution is involved.
    Returns an array of the batch shape (scalar for a single path).
    """
    x_path = np.asarray(x_path)
    y_path = np.asarray(y_path)
    m_x = x_path.shape[-2] - 1
    m_y = y_path.shape[-2] - 1
    if m_x % n or m_y % n:
        raise LevelError(f"level {n} does not divide path grids ({m_x}, {m_y})")
    if x_path.shape[-1] != model.e or y_path.shape[-1] != model.d:
        raise ValueError("path dimensions do not match the model")
    x_grid = x_path[..., :: m_x // n, :][..., :-1, :]      # (..., n, e)
    y_grid = y_path[:: m_y // n, :]                        # (n + 1, d)
    dY = np.diff(y_grid, axis=0)                           # (n, d)
    hv = model.h(x_grid, y_grid[:-1])                      # (..., n, d)
    ito = np.einsum("...nd,nd->...", hv, dY)
    lebesgue = np.einsum("...nd,...nd->...", hv, hv) / n
    return ito - 0.5 * lebesgue


def _mean_std(values: np.ndarray):
    m = values.shape[0]
    mean = math.fsum(values) / m
    if m > 1:
        var = math.fsum((values - mean) ** 2) / (m - 1)
        return mean, math.sqrt(var / m)
    return mean, float("inf")


def draw_particles(model: FilterModel, lattice: BrownianLattice, M: int,
                   seed: int):
    """Initial conditions and fine-grid particle noise for one lattice.

    The mapping from particle index to (X0, B) draw depends only on
    (lattice identity, seed, M-independent ordering), so changing the
    discretization level never re-shuffles the common random numbers.
    """
    rng = lattice.particle_rng(seed)
    x0 = model.x0_sampler(rng, M)
    dB = rng.standard_normal((M, lattice.n_fine, model.e)) / np.sqrt(lattice.n_fine)
    return x0, dB


def _weighted_values(model: FilterModel, lattice: BrownianLattice,
                     y_path: np.ndarray, g: TestFunction, scheme: WeightScheme,
                     x0: np.ndarray, dB: np.ndarray):
    """Per-particle g(X_1) Phi values for one scheme; (values, failed)."""
    n = scheme.level(lattice.n_fine)
    if scheme.tag is SchemeTag.SCHEME_II:
        states, failed = particle_paths(model, y_path, x0, block_sums(dB, n), n)
        logw = log_weight(model, states, y_path[:: lattice.n_fine // n], n)
    else:
        states, failed = particle_paths(model, y_path, x0, dB, lattice.n_fine)
        logw = log_weight(model, states, y_path, n)
    values = g.fn(states[:, -1]) * np.exp(logw)
    return values, failed


def rho_estimate(model: FilterModel, lattice: BrownianLattice,
                 phi_scheme: WeightScheme, M: int, seed: int,
                 g: TestFunction,
                 y_path: Optional[np.ndarray] = None) -> ParticleEstimate:
    """Particle estimate of rho(g) for one observation path.

    ``y_path`` defaults to the lattice's Brownian W (the law of Y under the
    changed measure); pass a simulated observation path to estimate under
    the original measure's observations.
    """
    if M < 2:
        raise ValueError("need at least 2 particles")
    if y_path is None:
        y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    values, failed = _weighted_values(model, lattice, y_path, g, phi_scheme, x0, dB)
    ok = ~failed
    if not ok.any():
        raise EstimationError("all particles failed")
    mean, se = _mean_std(values[ok])
    return ParticleEstimate(value=mean, std_error=se, M=M,
                            failures=int(failed.sum()))


def normalized_estimate(model: FilterModel, lattice: BrownianLattice,
                        phi_scheme: WeightScheme, M: int, seed: int,
                        g: TestFunction,
                        y_path: Optional[np.ndarray] = None) -> ParticleEstimate:
    """Self-normalized filter estimate rho(g)/rho(1) with a delta-method
    standard error."""
    if y_path is None:
        y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    n = phi_scheme.level(lattice.n_fine)
    if phi_scheme.tag is SchemeTag.SCHEME_II:
        states, failed = particle_paths(model, y_path, x0, block_sums(dB, n), n)
        logw = log_weight(model, states, y_path[:: lattice.n_fine // n], n)
    else:
        states, failed = particle_paths(model, y_path, x0, dB, lattice.n_fine)
        logw = log_weight(model, states, y_path, n)
    ok = ~failed
    if not ok.any():
        raise EstimationError("all particles failed")
    w = np.exp(logw[ok])
    gv = g.fn(states[ok, -1])
    wbar = math.fsum(w) / w.size
    ratio = math.fsum(gv * w) / (wbar * w.size)
    infl = (gv - ratio) * w / wbar
    se = float(np.std(infl, ddof=1) / np.sqrt(w.size))
    return ParticleEstimate(value=ratio, std_error=se, M=M,
                            failures=int(failed.sum()))


@dataclass(frozen=True)
class ErrorSample:
    """One rescaled error draw sqrt(n) (rho-hat_ref(g) - rho-hat_n(g))."""

    raw_error: float
    rescaled: float
    std_error: float       # Monte Carlo error of the rescaled difference
    failures: int


def error_sample(model: FilterModel, lattice: BrownianLattice, g: TestFunction,
                 scheme: WeightScheme, n: int, M: int, seed: int) -> ErrorSample:
    """Rescaled unnormalized error for one observation path.

    The reference and level-n estimates consume identical particle noise
    and are differenced particle by particle before averaging.
    """
    if n > lattice.n_fine // 8:
        raise LevelError(
            f"level {n} too close to the fine grid {lattice.n_fine}; "
            "the reference must dominate (n <= n_fine / 8)")
    y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    ref = WeightScheme(SchemeTag.REFERENCE)
    coarse = WeightScheme(scheme.tag, n)
    v_ref, f_ref = _weighted_values(model, lattice, y_path, g, ref, x0, dB)
    v_n, f_n = _weighted_values(model, lattice, y_path, g, coarse, x0, dB)
    ok = ~(f_ref | f_n)
    if not ok.any():
        raise EstimationError("all particles failed")
    diff = v_ref[ok] - v_n[ok]
    raw, se = _mean_std(diff)
    root_n = math.sqrt(n)
    return ErrorSample(raw_error=raw, rescaled=root_n * raw,
                       std_error=root_n * se, failures=int((~ok).sum()))


def normalized_error_sample(model: FilterModel, lattice: BrownianLattice,
                            g: TestFunction, scheme: WeightScheme, n: int,
                            M: int, seed: int) -> ErrorSample:
    """Rescaled error of the Kallianpur--Striebel ratio, common particles."""
    if n > lattice.n_fine // 8:
        raise LevelError(
            f"level {n} too close to the fine grid {lattice.n_fine}")
    y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    ref = WeightScheme(SchemeTag.REFERENCE)
    coarse = WeightScheme(scheme.tag, n)
    one = TestFunction("one", fn=lambda x: np.ones(x.shape[:-1]),
                       grad=lambda x: np.zeros(x.shape))
    vg_ref, f1 = _weighted_values(model, lattice, y_path, g, ref, x0, dB)
    v1_ref, f2 = _weighted_values(model, lattice, y_path, one, ref, x0, dB)
    vg_n, f3 = _weighted_values(model, lattice, y_path, g, coarse, x0, dB)
    v1_n, f4 = _weighted_values(model, lattice, y_path, one, coarse, x0, dB)
    ok = ~(f1 | f2 | f3 | f4)
    if not ok.any():
        raise EstimationError("all particles failed")
    m = int(ok.sum())
    w_ref, w_n = v1_ref[ok], v1_n[ok]
    pi_ref = math.fsum(vg_ref[ok]) / math.fsum(w_ref)
    pi_n = math.fsum(vg_n[ok]) / math.fsum(w_n)
    raw = pi_ref - pi_n
    infl = ((vg_ref[ok] - pi_ref * w_ref) / (math.fsum(w_ref) / m)
            - (vg_n[ok] - pi_n * w_n) / (math.fsum(w_n) / m))
    se = float(np.std(infl, ddof=1) / np.sqrt(m))
    root_n = math.sqrt(n)
    return ErrorSample(raw_error=raw, rescaled=root_n * raw,
                       std_error=root_n * se, failures=int((~ok).sum()))

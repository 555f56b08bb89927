"""Euler--Maruyama integration of the filtering system.

The signal recursion at level n is

    X_{(k+1)/n} = X_{k/n} + b(X_{k/n}, Y_{k/n}) / n
                  + sigma(X_{k/n}, Y_{k/n}) dB_k + v(X_{k/n}, Y_{k/n}) dY_k,

with all coefficients frozen at the left grid point.  Every level consumes
block sums of the same fine-lattice noise, so trajectories at different
levels are coupled pathwise.  The scheme at the finest level doubles as the
reference ("exact") path in error samples.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .lattice import BrownianLattice, block_sums
from .models import FilterModel


class IntegrationError(RuntimeError):
    """Non-finite state encountered during integration."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


@dataclass(frozen=True)
class EulerTrajectory:
    """Grid-indexed state path at level n plus observation-path samples."""

    n: int
    states: np.ndarray                 # (n+1, e)
    y_states: np.ndarray               # (n+1, d)
    log_weight_increments: np.ndarray  # (n,), per-step log Girsanov terms

    @property
    def log_weight(self) -> float:
        return float(self.log_weight_increments.sum())


def brownian_y_path(lattice: BrownianLattice) -> np.ndarray:
    """Observation path under the reference measure, where Y is the
    lattice's W started at 0.  Shape (n_fine + 1, d)."""
    return lattice.w_path()


def _coarse_y(y_path: np.ndarray, n_fine: int, n: int) -> np.ndarray:
    """Observation path restricted to the level-n grid, (n+1, d)."""
    stride = n_fine // n
    return y_path[::stride]


def integrate_euler(model: FilterModel, lattice: BrownianLattice, n: int,
                    x0: Optional[np.ndarray] = None,
                    y_source: Union[str, np.ndarray] = "brownian") -> EulerTrajectory:
    """Run the Euler scheme at level ``n`` on the lattice's noise.

    ``y_source`` selects the observation path: "brownian" uses the
    lattice's W (the law of Y under the changed measure), while an array of
    shape (n_fine + 1, d) supplies a realized observation path on the fine
    grid.  ``x0`` defaults to a draw from the model's initial law using the
    lattice's dedicated X0 stream.
    """
    dB = block_sums(lattice.dB, n)
    if isinstance(y_source, str):
        if y_source != "brownian":
            raise ValueError(f"unknown y_source {y_source!r}")
        y = _coarse_y(brownian_y_path(lattice), lattice.n_fine, n)
    else:
        y_source = np.asarray(y_source)
        if y_source.shape != (lattice.n_fine + 1, model.d):
            raise ValueError(
                f"y_source path must have shape ({lattice.n_fine + 1}, {model.d}), "
                f"got {y_source.shape}")
        y = _coarse_y(y_source, lattice.n_fine, n)
    dY = np.diff(y, axis=0)

    if x0 is None:
        x0 = model.x0_sampler(lattice.x0_rng(), 1)[0]
    x0 = np.asarray(x0, dtype=float).reshape(model.e)

    dt = 1.0 / n
    states = np.empty((n + 1, model.e))
    states[0] = x0
    log_w = np.empty(n)
    x = x0[None, :]
    for k in range(n):
        yk = y[k][None, :]
        hv = model.h(x, yk)[0]
        log_w[k] = hv @ dY[k] - 0.5 * (hv @ hv) * dt
        drift = model.b(x, yk)[0] * dt
        diff_b = model.sigma(x, yk)[0] @ dB[k]
        diff_y = model.v(x, yk)[0] @ dY[k]
        x = (x[0] + drift + diff_b + diff_y)[None, :]
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > model.state_bound):
            raise IntegrationError(k)
        states[k + 1] = x[0]
    return EulerTrajectory(n=n, states=states, y_states=y,
                           log_weight_increments=log_w)


def integrate_reference(model: FilterModel, lattice: BrownianLattice,
                        x0: Optional[np.ndarray] = None,
                        y_source: Union[str, np.ndarray] = "brownian") -> EulerTrajectory:
    """Euler at the finest level; the proxy for the exact signal path."""
    return integrate_euler(model, lattice, lattice.n_fine, x0=x0, y_source=y_source)


def simulate_observation(model: FilterModel, lattice: BrownianLattice,
                         x0: Optional[np.ndarray] = None):
    """Jointly integrate (X, Y) at the fine level under the original
    measure, with dY = h dt + dW.  Returns (x_path, y_path) of shapes
    (n_fine + 1, e) and (n_fine + 1, d)."""
    n = lattice.n_fine
    dt = 1.0 / n
    if x0 is None:
        x0 = model.x0_sampler(lattice.x0_rng(), 1)[0]
    x0 = np.asarray(x0, dtype=float).reshape(model.e)

    x_path = np.empty((n + 1, model.e))
    y_path = np.empty((n + 1, model.d))
    x_path[0] = x0
    y_path[0] = 0.0
    x = x0[None, :]
    y = np.zeros((1, model.d))
    for k in range(n):
        dY = model.h(x, y)[0] * dt + lattice.dW[k]
        x_new = (x[0] + model.b(x, y)[0] * dt + model.sigma(x, y)[0] @ lattice.dB[k]
                 + model.v(x, y)[0] @ dY)
        if not np.all(np.isfinite(x_new)) or np.any(np.abs(x_new) > model.state_bound):
            raise IntegrationError(k)
        x = x_new[None, :]
        y = (y[0] + dY)[None, :]
        x_path[k + 1] = x[0]
        y_path[k + 1] = y[0]
    return x_path, y_path


# ---------------------------------------------------------------------------
# Batched particle integration.  Particles share one observation path; the
# batch keeps full fine-grid state histories for the weight and variance
# estimators downstream.  Non-finite particles are frozen and flagged
# rather than raising, so one bad particle cannot abort a whole estimate.
# ---------------------------------------------------------------------------

def particle_paths(model: FilterModel, y_path: np.ndarray, x0: np.ndarray,
                   dB: np.ndarray, n: int):
    """Integrate M particles at level ``n`` against a common observation path.

    ``y_path``: (n_fine + 1, d) fine-grid observation path; ``x0``: (M, e);
    ``dB``: (M, n, e) level-n Brownian increments.  Returns ``states`` of
    shape (M, n + 1, e) and a boolean ``failed`` mask of shape (M,).
    """
    M = x0.shape[0]
    n_fine = y_path.shape[0] - 1
    y = _coarse_y(y_path, n_fine, n)
    dY = np.diff(y, axis=0)
    dt = 1.0 / n

    states = np.empty((M, n + 1, model.e))
    states[:, 0] = x0
    failed = np.zeros(M, dtype=bool)
    x = x0.copy()
    for k in range(n):
        yk = y[k][None, :]
        x_new = (x + model.b(x, yk) * dt
                 + (model.sigma(x, yk) @ dB[:, k, :, None])[..., 0]
                 + model.v(x, yk) @ dY[k])
        bad = ~np.isfinite(x_new).all(axis=1)
        bad |= np.abs(x_new).max(axis=1) > model.state_bound
        if bad.any():
            x_new[bad] = x[bad]   # freeze failed particles
            failed |= bad
        x = x_new
        states[:, k + 1] = x
    return states, failed

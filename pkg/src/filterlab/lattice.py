"""Brownian driving noise on a refinable time lattice.

All randomness in the library flows through this module.  A lattice holds
the fine-grid increments of the two driving Brownian motions and is a pure
function of ``(seed, path_index)``, so experiments are reproducible and
independent of scheduling order.  Coarser grids are obtained by summing
disjoint blocks of fine increments, never by regenerating noise; this keeps
every discretization level coupled to the same underlying path.
"""

from dataclasses import dataclass

import numpy as np

# Sub-stream tags.  Initial conditions consume a stream separate from the
# increments so that changing the grid never shifts the X0 draws.
_STREAM_NOISE = 0
_STREAM_X0 = 1
_STREAM_PARTICLES = 2


class ConfigurationError(ValueError):
    """Invalid lattice or experiment configuration."""


class LevelError(ValueError):
    """A requested coarse level does not divide the fine grid."""


def eta(n: int, t):
    """Project time ``t`` onto the grid of mesh ``1/n``: floor(t*n)/n."""
    if n <= 0:
        raise ConfigurationError(f"grid level must be positive, got {n}")
    return np.floor(np.multiply(t, n)) / n


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def stream_rng(seed: int, path_index: int, stream: int) -> np.random.Generator:
    """Counter-style generator keyed by (seed, path_index, stream)."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class BrownianLattice:
    """Fine-grid increments of the driving pair of Brownian motions.

    ``dB`` has shape (n_fine, e) and ``dW`` shape (n_fine, d); each
    increment has variance 1/n_fine per coordinate.
    """

    n_fine: int
    dB: np.ndarray
    dW: np.ndarray
    seed: int
    path_index: int

    @property
    def e(self) -> int:
        return self.dB.shape[1]

    @property
    def d(self) -> int:
        return self.dW.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_fine + 1)

    def w_path(self) -> np.ndarray:
        """Path of W on the fine grid, shape (n_fine + 1, d), W_0 = 0."""
        path = np.empty((self.n_fine + 1, self.d))
        path[0] = 0.0
        np.cumsum(self.dW, axis=0, out=path[1:])
        return path

    def b_path(self) -> np.ndarray:
        """Path of B on the fine grid, shape (n_fine + 1, e), B_0 = 0."""
        path = np.empty((self.n_fine + 1, self.e))
        path[0] = 0.0
        np.cumsum(self.dB, axis=0, out=path[1:])
        return path

    def x0_rng(self) -> np.random.Generator:
        """Dedicated RNG stream for initial-condition draws on this path."""
        return stream_rng(self.seed, self.path_index, _STREAM_X0)

    def particle_rng(self, particle_seed: int) -> np.random.Generator:
        """RNG stream for particle noise attached to this lattice."""
        ss = np.random.SeedSequence(
            entropy=(int(self.seed), int(self.path_index), _STREAM_PARTICLES,
                     int(particle_seed)))
        return np.random.Generator(np.random.Philox(ss))


def sample_lattice(e: int, d: int, n_fine: int, seed: int,
                   path_index: int) -> BrownianLattice:
    """Draw the fine-grid increments for one replication.

    Deterministic in ``(seed, path_index)`` regardless of how many lattices
    are generated concurrently.
    """
    if not _is_power_of_two(n_fine):
        raise ConfigurationError(
            f"n_fine must be a power of two, got {n_fine}")
    if e < 1 or d < 1:
        raise ConfigurationError(f"dimensions must be positive, got e={e}, d={d}")
    rng = stream_rng(seed, path_index, _STREAM_NOISE)
    scale = 1.0 / np.sqrt(n_fine)
    dB = rng.standard_normal((n_fine, e)) * scale
    dW = rng.standard_normal((n_fine, d)) * scale
    return BrownianLattice(n_fine=n_fine, dB=dB, dW=dW, seed=seed,
                           path_index=path_index)


def block_sums(increments: np.ndarray, n: int) -> np.ndarray:
    """Sum disjoint blocks of fine increments down to ``n`` coarse steps.

    ``increments`` has shape (..., n_fine, dim); summation is over the
    second-to-last axis.  ``n`` must divide n_fine.
    """
    n_fine = increments.shape[-2]
    if n <= 0 or n_fine % n != 0:
        raise LevelError(
            f"coarse level {n} does not divide the fine grid {n_fine}")
    m = n_fine // n
    shape = increments.shape[:-2] + (n, m, increments.shape[-1])
    return increments.reshape(shape).sum(axis=-2)


def coarsen(lattice: BrownianLattice, n: int):
    """Coarse increments (dB, dW) of the lattice at level ``n``."""
    return block_sums(lattice.dB, n), block_sums(lattice.dW, n)

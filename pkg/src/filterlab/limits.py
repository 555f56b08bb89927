"""Direct verification of the double-stochastic-integral limit theorems.

The basic object is the rescaled double integral

    S_n = sqrt(n) int_0^1 int_{eta_n(s)}^s theta_r dW_r^j  dW_s^i,

whose stable limit is mixed normal with conditional variance
1/2 int |E[theta_s | F_1^W]|^2 ds.  The inner integral resets at each
coarse grid time; both integrals are discretized on the fine lattice.

For i = j the within-fine-step part of the outer integral is the Ito
identity int_{t_k}^{t_{k+1}} (W_s - W_{t_k}) dW_s = ((dW_k)^2 - dt)/2 and
is included exactly, so e.g. the theta = 1 statistic has variance exactly
1/2 at every level.  For i != j the within-step term is a Levy-area
functional with no increment representation; it is omitted, which biases
second moments by O(n / n_fine) (documented, and kept small by the
n <= n_fine / 8 precondition).

Evaluator conventions: ``theta(t, b, w)`` receives the fine grid times and
the B and W paths restricted to the left endpoints (arrays of length
n_fine) and returns the adapted integrand values there.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .lattice import BrownianLattice, ConfigurationError, LevelError


def _check_level(n: int, n_fine: int) -> int:
    if n <= 0 or n_fine % n != 0:
        raise LevelError(f"level {n} does not divide the fine grid {n_fine}")
    if n > n_fine // 8:
        raise LevelError(
            f"level {n} too close to the fine grid {n_fine} (need n <= n_fine/8)")
    return n_fine // n


def _left_args(lattice: BrownianLattice):
    t = lattice.times[:-1]
    b = lattice.b_path()[:-1]
    w = lattice.w_path()[:-1]
    return t, b, w


def _double_core(th: np.ndarray, dW_inner: np.ndarray, dW_outer: np.ndarray,
                 n: int, lam: Optional[np.ndarray] = None,
                 diagonal: bool = False) -> float:
    """sqrt(n) sum of the discretized double integral.

    ``th``: integrand at fine left points (n_fine,); ``dW_inner``/``dW_outer``:
    fine increments of the two driving coordinates; ``lam``: optional outer
    factor at fine left points; ``diagonal``: include the exact within-step
    Ito term (valid when the coordinates coincide).
    """
    n_fine = th.shape[0]
    m = n_fine // n
    inner_inc = (th * dW_inner).reshape(n, m)
    cum = np.cumsum(inner_inc, axis=1)
    inner_excl = np.empty_like(cum)
    inner_excl[:, 0] = 0.0
    inner_excl[:, 1:] = cum[:, :-1]
    outer = inner_excl.reshape(n_fine) * dW_outer
    if diagonal:
        outer = outer + 0.5 * th * (dW_outer ** 2 - 1.0 / n_fine)
    if lam is not None:
        outer = outer * lam
    return math.sqrt(n) * math.fsum(outer)


def double_integral(lattice: BrownianLattice, theta: Callable, n: int,
                    i: int = 0, j: int = 0) -> float:
    """Rescaled double integral of ``theta`` against (dW^j, dW^i)."""
    _check_level(n, lattice.n_fine)
    t, b, w = _left_args(lattice)
    th = np.broadcast_to(np.asarray(theta(t, b, w), dtype=float),
                         (lattice.n_fine,))
    return _double_core(th, lattice.dW[:, j], lattice.dW[:, i], n,
                        diagonal=(i == j))


@dataclass(frozen=True)
class TestCase31:
    """A (F, theta) pair with closed-form conditional-expectation projector.

    ``projector(t, w)`` evaluates E[F theta_r | F_r^W] at the fine left
    points; ``cond_std(w_full)`` is the conditional standard deviation of
    the limit given the W path (constant when the limit is plain normal);
    ``limit_variance`` is the unconditional variance when deterministic,
    None for genuinely mixed cases.  ``lam`` optionally inserts a
    continuous adapted factor in the outer integral.
    """

    name: str
    theta: Callable
    projector: Callable
    cond_std: Callable
    limit_variance: Optional[float]
    lam: Optional[Callable] = None
    description: str = ""


def conditional_double_integral(case: TestCase31, lattice: BrownianLattice,
                                n: int) -> float:
    """Rescaled double integral of the case's projected integrand."""
    _check_level(n, lattice.n_fine)
    t, b, w = _left_args(lattice)
    p = np.broadcast_to(np.asarray(case.projector(t, w), dtype=float),
                        (lattice.n_fine,))
    lam = None
    if case.lam is not None:
        lam = np.broadcast_to(np.asarray(case.lam(t), dtype=float),
                              (lattice.n_fine,))
    return _double_core(p, lattice.dW[:, 0], lattice.dW[:, 0], n, lam=lam,
                        diagonal=True)


_CASES = {
    # F = 1, theta = 1: plain N(0, 1/2) limit
    "unit": TestCase31(
        name="unit",
        theta=lambda t, b, w: np.ones_like(t),
        projector=lambda t, w: np.ones_like(t),
        cond_std=lambda w: math.sqrt(0.5),
        limit_variance=0.5,
        description="constant integrand; normal limit, variance 1/2"),
    # F = B_1, theta_r = B_r: E[B_1 B_r | F_r^W] = r; N(0, 1/6), independent of W
    "projector-r": TestCase31(
        name="projector-r",
        theta=lambda t, b, w: b[:, 0],
        projector=lambda t, w: t,
        cond_std=lambda w: math.sqrt(1.0 / 6.0),
        limit_variance=1.0 / 6.0,
        description="signal-dependent integrand projecting to r; variance 1/6"),
    # F = W_1, theta = 1: projector W_r; mixed normal, cond. variance W_1^2/2
    "mixed": TestCase31(
        name="mixed",
        theta=lambda t, b, w: np.ones_like(t),
        projector=lambda t, w: w[:, 0],
        cond_std=lambda w: abs(w[-1, 0]) / math.sqrt(2.0),
        limit_variance=None,
        description="W_1-weighted case; genuinely mixed normal"),
    # F = 1, theta = 1 with adapted outer factor lam_s = s: variance 1/6
    "outer-factor": TestCase31(
        name="outer-factor",
        theta=lambda t, b, w: np.ones_like(t),
        projector=lambda t, w: np.ones_like(t),
        cond_std=lambda w: math.sqrt(1.0 / 6.0),
        limit_variance=1.0 / 6.0,
        lam=lambda t: t,
        description="adapted factor s in the outer integral; variance 1/6"),
}


def list_cases():
    return sorted(_CASES)


def get_case(name: str) -> TestCase31:
    try:
        return _CASES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown limit case {name!r}; available: "
            f"{', '.join(list_cases())}") from None


def qv_statistic(lattice: BrownianLattice, a: Callable, b: Callable,
                 i: int, j: int, n: int) -> float:
    """n int_0^1 (int_eta^s a dW^i)(int_eta^s b dW^j) ds on one lattice.

    The time integral uses the trapezoid rule within each fine step, which
    makes the a = b = 1 diagonal statistic unbiased for 1/2 at every level.
    """
    m = _check_level(n, lattice.n_fine)
    n_fine = lattice.n_fine
    t = lattice.times
    w = lattice.w_path()
    a_vals = np.broadcast_to(np.asarray(a(t[:-1], w[:-1]), dtype=float), (n_fine,))
    b_vals = np.broadcast_to(np.asarray(b(t[:-1], w[:-1]), dtype=float), (n_fine,))
    A = np.cumsum((a_vals * lattice.dW[:, i]).reshape(n, m), axis=1)
    B = np.cumsum((b_vals * lattice.dW[:, j]).reshape(n, m), axis=1)
    P = A * B                      # product at block offsets 1..m; offset 0 is 0
    # trapezoid over the m fine steps of each block: endpoints at offsets 0..m
    block = 0.5 * (P[:, :-1] + P[:, 1:]).sum(axis=1) + 0.5 * P[:, 0]
    return n * math.fsum(block) / n_fine


def qv_limit_check(lattices: Sequence[BrownianLattice], a: Callable,
                   b: Callable, i: int, j: int, n_ladder: Sequence[int]):
    """Mean and standard error of the quadratic-covariation statistic per level."""
    rows = []
    for n in n_ladder:
        vals = np.array([qv_statistic(lat, a, b, i, j, n) for lat in lattices])
        rows.append({"n": int(n), "mean": float(vals.mean()),
                     "std_error": float(vals.std(ddof=1) / math.sqrt(len(vals)))})
    return rows


@dataclass(frozen=True)
class ZeroCase:
    """A vanishing projected double integral with its closed-form statistic.

    ``statistic(lattice, n)`` evaluates sqrt(n) E[F int int theta dX dY |
    F_1^W] for the case's (F, theta, X, Y); cases where the conditional
    expectation vanishes identically return 0 exactly.
    """

    name: str
    statistic: Callable
    identically_zero: bool
    description: str = ""


def _drift_inner_statistic(lattice: BrownianLattice, n: int) -> float:
    """sqrt(n) int_0^1 (s - eta_n(s)) dW_s, the F = B_1, dX = dr case."""
    _check_level(n, lattice.n_fine)
    gaps = lattice.times[:-1] - np.floor(lattice.times[:-1] * n) / n
    return math.sqrt(n) * math.fsum(gaps * lattice.dW[:, 0])


_ZERO_CASES = {
    "independent-inner": ZeroCase(
        name="independent-inner",
        statistic=lambda lattice, n: 0.0,
        identically_zero=True,
        description="F = 1, inner dB: conditional expectation vanishes"),
    "odd-symmetry": ZeroCase(
        name="odd-symmetry",
        statistic=lambda lattice, n: 0.0,
        identically_zero=True,
        description="F = B_1^2, both integrators dB: odd functional of B"),
    "drift-inner": ZeroCase(
        name="drift-inner",
        statistic=_drift_inner_statistic,
        identically_zero=False,
        description="F = B_1, inner dr: projected statistic of order n^{-1/2}"),
}


def list_zero_cases():
    return sorted(_ZERO_CASES)


def get_zero_case(name: str) -> ZeroCase:
    try:
        return _ZERO_CASES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown zero case {name!r}; available: "
            f"{', '.join(list_zero_cases())}") from None


def zero_limit_check(lattices: Sequence[BrownianLattice], case: ZeroCase,
                     n_ladder: Sequence[int]):
    """L1 magnitude of the case's statistic per level."""
    rows = []
    for n in n_ladder:
        vals = np.abs([case.statistic(lat, n) for lat in lattices])
        rows.append({"n": int(n), "mean_abs": float(vals.mean()),
                     "std_error": float(vals.std(ddof=1) / math.sqrt(len(vals)))})
    return rows


@dataclass(frozen=True)
class FubiniCase:
    """An integrand f(t, B, W) with the closed form of E[f_s | F_1^W].

    ``exact`` marks cases where the two evaluation orders agree path by
    path (f already F^W-adapted), so the discrepancy is zero up to
    floating-point rounding rather than up to Monte Carlo error.
    """

    name: str
    f: Callable
    projector: Callable
    exact: bool = False
    description: str = ""


_FUBINI_CASES = {
    "adapted-w": FubiniCase(
        name="adapted-w",
        f=lambda t, B, W: np.broadcast_to(W[:, 0], B.shape[:1] + t.shape),
        projector=lambda t, w: w[:-1, 0],
        exact=True,
        description="f = W_s is observation-adapted; both sides coincide"),
    "independent-b": FubiniCase(
        name="independent-b",
        f=lambda t, B, W: B[..., 0],
        projector=lambda t, w: np.zeros_like(t),
        description="f = B_s independent of W; projector vanishes"),
    "b-squared": FubiniCase(
        name="b-squared",
        f=lambda t, B, W: B[..., 0] ** 2,
        projector=lambda t, w: t,
        description="f = B_s^2; projector is the time variable"),
}


def list_fubini_cases():
    return sorted(_FUBINI_CASES)


def get_fubini_case(name: str) -> FubiniCase:
    try:
        return _FUBINI_CASES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown fubini case {name!r}; available: "
            f"{', '.join(list_fubini_cases())}") from None


def fubini_check(f: Callable, projector: Callable,
                 lattices: Sequence[BrownianLattice], n_grid: int = 4,
                 inner_samples: int = 4096):
    """Compare the two evaluation orders of E[int f dW | F_1^W].

    ``f(t, B, W)``: integrand at the left points of an ``n_grid``-step grid,
    vectorized over a batch of B paths (B of shape (K, n_grid + 1, 1));
    ``projector(t, W)``: closed form E[f_s | F_1^W] at the same points.
    Side one integrates the projector against dW; side two is a nested
    Monte Carlo average over fresh B paths for each outer W lattice.
    Returns a dict with the discrepancy, its standard error and both sides.
    """
    t_grid = np.linspace(0.0, 1.0, n_grid + 1)
    diffs = []
    for lattice in lattices:
        stride = lattice.n_fine // n_grid
        w = lattice.w_path()[::stride]                     # (n_grid + 1, d)
        dW = np.diff(w[:, 0])
        proj = np.broadcast_to(
            np.asarray(projector(t_grid[:-1], w), dtype=float), (n_grid,))
        side_projected = float(proj @ dW)

        rng = lattice.particle_rng(0)
        dB = rng.standard_normal((inner_samples, n_grid, 1)) / math.sqrt(n_grid)
        B = np.concatenate(
            [np.zeros((inner_samples, 1, 1)), np.cumsum(dB, axis=1)], axis=1)
        f_vals = np.asarray(f(t_grid[:-1], B[:, :-1], w[:-1]), dtype=float)
        side_nested = float((f_vals @ dW).mean())
        diffs.append(side_projected - side_nested)
    diffs = np.array(diffs)
    return {
        "discrepancy": float(diffs.mean()),
        "std_error": float(diffs.std(ddof=1) / math.sqrt(len(diffs))),
        "paths": len(diffs),
    }

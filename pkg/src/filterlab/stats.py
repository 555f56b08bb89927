"""Statistical harness: KS tests, mixed-normal standardization, rate fits.

Verdict conventions: distributional tests pass at p > 0.01, moment tests
within 3 standard errors, rate slopes within stated bands.  Every point
estimate carries a standard error; nothing is reported bare.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .lattice import ConfigurationError


@dataclass(frozen=True)
class SampleSet:
    """Finite real samples with optional nonnegative weights."""

    values: np.ndarray
    weights: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise ConfigurationError(f"non-finite samples in {self.label!r}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != values.shape:
                raise ConfigurationError("weights must match samples in length")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ConfigurationError("weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.values.size


def kolmogorov_sf(lam: float, terms: int = 100, tol: float = 1e-10) -> float:
    """Survival function of the Kolmogorov distribution,
    P(sup|Brownian bridge| > lam) = 2 sum_k (-1)^{k-1} exp(-2 k^2 lam^2)."""
    if lam <= 0:
        return 1.0
    total = 0.0
    for k in range(1, terms + 1):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < tol:
            break
    return min(1.0, max(0.0, total))


def ks_test(samples: SampleSet, cdf: Callable) -> tuple:
    """Two-sided Kolmogorov-Smirnov test against a continuous CDF.

    Returns (statistic, asymptotic p-value).  Weights are not supported
    here; weighted comparisons go through :func:`weighted_limit_check`.
    """
    n = len(samples)
    if n < 50:
        raise ConfigurationError(f"need at least 50 samples, got {n}")
    x = np.sort(samples.values)
    F = np.asarray(cdf(x), dtype=float)
    grid = np.arange(1, n + 1) / n
    d_plus = float(np.max(grid - F))
    d_minus = float(np.max(F - (grid - 1.0 / n)))
    stat = max(d_plus, d_minus)
    p = kolmogorov_sf(math.sqrt(n) * stat)
    return stat, p


def standard_normal_cdf(x):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(x) / math.sqrt(2.0)))


def normal_cdf(mean: float, std: float) -> Callable:
    return lambda x: standard_normal_cdf((np.asarray(x) - mean) / std)


def standardize_mixed_normal(errors: SampleSet, variances: np.ndarray,
                             floor: float = 1e-12):
    """Per-sample standardization Z = error / sqrt(V).

    Samples whose variance estimate is at or below ``floor`` are excluded
    and counted; a large count signals a degenerate model in which the
    limit variance vanishes.  Returns (SampleSet, excluded_count).
    """
    variances = np.asarray(variances, dtype=float)
    if variances.shape != errors.values.shape:
        raise ConfigurationError("variances must align with errors")
    keep = variances > floor
    z = errors.values[keep] / np.sqrt(variances[keep])
    return (SampleSet(values=z, label=errors.label + " standardized"),
            int((~keep).sum()))


@dataclass(frozen=True)
class RateFit:
    """Log-log least-squares fit of mean absolute error against level."""

    levels: np.ndarray
    mean_abs: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float


def _fit_slope(levels, mean_abs):
    x = np.log2(np.asarray(levels, dtype=float))
    y = np.log2(np.asarray(mean_abs, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def rate_regression(levels: Sequence[int], errors_per_level: Sequence,
                    seed: int = 0, bootstrap: int = 200) -> RateFit:
    """Rate fit with a level-wise bootstrap standard error on the slope."""
    if len(levels) < 4:
        raise ConfigurationError("need at least 4 levels for a rate fit")
    errs = [np.abs(np.asarray(e, dtype=float)) for e in errors_per_level]
    for e in errs:
        if e.size < 100:
            raise ConfigurationError("need at least 100 samples per level")
    mean_abs = np.array([e.mean() for e in errs])
    slope, intercept = _fit_slope(levels, mean_abs)
    rng = np.random.default_rng(seed)
    slopes = np.empty(bootstrap)
    for b in range(bootstrap):
        resampled = [e[rng.integers(0, e.size, e.size)].mean() for e in errs]
        slopes[b], _ = _fit_slope(levels, resampled)
    return RateFit(levels=np.asarray(levels), mean_abs=mean_abs, slope=slope,
                   slope_stderr=float(slopes.std(ddof=1)), intercept=intercept)


# bounded Lipschitz test functions for weighted (stable-convergence) checks
F_DICT = {
    "tanh": np.tanh,
    "sin": np.sin,
    "gauss": lambda x: np.exp(-0.5 * np.asarray(x) ** 2),
}

# weight functionals of the terminal observation value W_1
WEIGHT_FUNCS = {
    "one": lambda w1: np.ones_like(np.asarray(w1, dtype=float)),
    "indicator": lambda w1: (np.asarray(w1) > 0).astype(float),
    "exp": lambda w1: np.exp(np.asarray(w1) - 0.5),
}


def mixed_normal_prediction(f: Callable, cond_std: Callable,
                            weight: Callable = None, points: int = 201) -> float:
    """E[f(sigma(W_1) xi) Y(W_1)] for xi ~ N(0,1) independent of W_1 ~ N(0,1);
    ``cond_std`` maps w_1 to sigma.

    The smooth inner average over xi uses Gauss-Hermite nodes; the outer
    integral over w_1 goes through adaptive quadrature so that jump
    discontinuities in the weight functional are located instead of
    smeared.
    """
    x, wx = np.polynomial.hermite_e.hermegauss(points)
    wx = wx / wx.sum()
    norm = 1.0 / math.sqrt(2.0 * math.pi)

    def outer(w):
        arr = np.array([w])
        sig = float(np.asarray(cond_std(arr), dtype=float).reshape(-1)[0])
        inner = float(np.asarray(f(sig * x), dtype=float) @ wx)
        y = 1.0
        if weight is not None:
            y = float(np.asarray(weight(arr), dtype=float).reshape(-1)[0])
        return inner * y * norm * math.exp(-0.5 * w * w)

    value, _ = integrate.quad(outer, -10.0, 10.0, limit=200)
    return float(value)


@dataclass(frozen=True)
class Verdict:
    name: str
    value: float
    std_error: float
    predicted: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)


def weighted_limit_check(samples: SampleSet, f: Callable, predicted: float,
                         name: str = "", sigmas: float = 3.0) -> Verdict:
    """Compare E[f(sample) weight] to a mixed-normal prediction within
    ``sigmas`` standard errors; unweighted when the sample set has no
    weights."""
    y = np.ones(len(samples)) if samples.weights is None else samples.weights
    prod = np.asarray(f(samples.values)) * y
    value = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(prod.size))
    tol = sigmas * se
    return Verdict(name=name or samples.label, value=value, std_error=se,
                   predicted=predicted, tolerance=tol,
                   passed=abs(value - predicted) <= tol)


def moment_check(name: str, value: float, std_error: float, predicted: float,
                 sigmas: float = 3.0) -> Verdict:
    return Verdict(name=name, value=value, std_error=std_error,
                   predicted=predicted, tolerance=sigmas * std_error,
                   passed=abs(value - predicted) <= sigmas * std_error)

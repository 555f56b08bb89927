"""Fused per-path experiment kernels.

One replication of the mixed-normal cross-validation needs, on a single
observation lattice, the rescaled error sample, its normalized analogue,
and the variance estimates that standardize them.  Computing these through
the public one-call-one-quantity operations would integrate the same
particle system several times; the kernels here integrate it once, reuse
the observation-function field across the weight and sensitivity
computations, and evaluate the variance integrand on a thinned s-grid
(the integrand is continuous in s; the quadrature shift from 4x thinning
is far below the Monte Carlo error).

The standardizing variance carries the factor (1 - n / n_fine): the
reference estimate is itself an Euler approximation whose error is driven
by the same within-block oscillations, and differencing against it removes
exactly that fraction of the limit variance.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .euler import brownian_y_path, particle_paths
from .girsanov import EstimationError, SchemeTag, draw_particles, log_weight
from .lattice import BrownianLattice, LevelError, block_sums
from .models import FilterModel, TestFunction
from .tangent import (_estimate_from_values, _transported_values,
                      h_sensitivity)


@dataclass(frozen=True)
class PathResult:
    """All per-path quantities of one cross-validation replication."""

    path_index: int
    scheme: str
    n: int
    rescaled_error: float            # sqrt(n) (rho_ref(g) - rho_n(g))
    error_stderr: float
    V_hat: float                     # conditional variance estimate for rho
    V_hat_stderr: float
    V_eff: float                     # V_hat (1 - n/n_fine) + particle var
    normalized_error: float          # sqrt(n) (pi_ref(g) - pi_n(g))
    normalized_stderr: float
    V_mu: float                      # conditional variance estimate for pi
    V_mu_stderr: float
    V_mu_eff: float
    V_mu_alt: float                  # same with the opposite sign convention
    V_mu_alt_eff: float
    failures: int
    sign: float


def _mu_from_values(z_g, z_1, phi, gv, ok, times, sign):
    """Normalized integrand mu and its variance functional from shared
    per-particle arrays; returns (V_mu, V_mu_stderr)."""
    m = int(ok.sum())
    B = phi[ok].mean()
    A = z_g[ok].mean(axis=0)
    D = z_1[ok].mean(axis=0)
    C = (gv[ok] * phi[ok]).mean()
    pi_g = C / B
    mu = A / B + sign * pi_g * (D / B)
    infl = ((z_g[ok] - A * (phi[ok] / B)[:, None, None, None]) / B
            + sign * ((gv[ok] * phi[ok] - C * phi[ok] / B)[:, None, None, None]
                      * (D / B) / B
                      + pi_g * (z_1[ok] - D * (phi[ok] / B)[:, None, None, None]) / B))
    var = infl.var(axis=0, ddof=1)
    integrand = (mu ** 2 - var / m).sum(axis=(1, 2))
    V_mu = 0.5 * float(trapezoid(integrand, times))
    q = trapezoid(np.einsum("sij,psij->ps", mu, infl), times, axis=-1)
    se = float(np.std(q, ddof=1) / math.sqrt(m))
    return V_mu, se


def _log_weights_shared(model, states, y_path, n):
    """(log Phi at the fine level, log Phi at level n) from one h field."""
    n_fine = states.shape[1] - 1
    m = n_fine // n
    hv = model.h(states[:, :-1, :], y_path[None, :-1, :])     # (M, n_fine, d)
    dY = np.diff(y_path, axis=0)
    logw_ref = (np.einsum("pnd,nd->p", hv, dY)
                - 0.5 * np.einsum("pnd,pnd->p", hv, hv) / n_fine)
    hv_c = hv[:, ::m]                                          # (M, n, d)
    dY_c = dY.reshape(n, m, -1).sum(axis=1)
    logw_n = (np.einsum("pnd,nd->p", hv_c, dY_c)
              - 0.5 * np.einsum("pnd,pnd->p", hv_c, hv_c) / n)
    return logw_ref, logw_n


def rate_ladder_sample(model: FilterModel, lattice: BrownianLattice,
                       g: TestFunction, ladder, M: int, seed: int):
    """Raw weighted-filter errors at every ladder level from one particle
    system (density-only scheme).

    All levels share the fine state path and one evaluation of the
    observation function along it, so the cost is one fine integration per
    lattice instead of one per level.  Returns (errors, std_errors): raw
    errors and their particle-noise standard errors, one float each per
    level in ladder order.  The standard errors let callers subtract the
    Monte Carlo noise power from mean squared errors, which matters for
    degenerate models whose conditional error decays below the particle
    noise floor.
    """
    n_fine = lattice.n_fine
    for n in ladder:
        if n <= 0 or n_fine % n or n > n_fine // 8:
            raise LevelError(
                f"level {n} must divide n_fine and satisfy n <= n_fine/8")
    y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    states, failed = particle_paths(model, y_path, x0, dB, n_fine)
    ok = ~failed
    if ok.sum() < 2:
        raise EstimationError("insufficient surviving particles")
    hv = model.h(states[:, :-1, :], y_path[None, :-1, :])
    dY = np.diff(y_path, axis=0)
    logw_ref = (np.einsum("pnd,nd->p", hv, dY)
                - 0.5 * np.einsum("pnd,pnd->p", hv, hv) / n_fine)
    v_ref = g.fn(states[:, -1]) * np.exp(logw_ref)
    errors, std_errors = [], []
    for n in ladder:
        m = n_fine // n
        hv_c = hv[:, ::m]
        dY_c = dY.reshape(n, m, -1).sum(axis=1)
        logw_n = (np.einsum("pnd,nd->p", hv_c, dY_c)
                  - 0.5 * np.einsum("pnd,pnd->p", hv_c, hv_c) / n)
        v_n = g.fn(states[:, -1]) * np.exp(logw_n)
        diff = v_ref[ok] - v_n[ok]
        count = int(ok.sum())
        errors.append(math.fsum(diff) / count)
        std_errors.append(float(np.std(diff, ddof=1) / math.sqrt(count)))
    return errors, std_errors


def path_sample(model: FilterModel, lattice: BrownianLattice, g: TestFunction,
                scheme: SchemeTag, n: int, M: int, seed: int,
                sign: float = -1.0, h_sq_drift_factor: float = -0.5,
                chunk: int = 256, stride: int = 4) -> PathResult:
    """One full replication on one lattice with a single particle system."""
    if scheme is SchemeTag.REFERENCE:
        raise ValueError("need an approximating scheme")
    if n > lattice.n_fine // 8:
        raise LevelError(f"level {n} too close to the fine grid {lattice.n_fine}")
    n_fine = lattice.n_fine
    y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    states, failed = particle_paths(model, y_path, x0, dB, n_fine)
    sub = slice(None, None, stride)
    times = lattice.times[sub]

    logw_ref, logw_n = _log_weights_shared(model, states, y_path, n)
    phi_ref = np.exp(logw_ref)
    gv_ref = g.fn(states[:, -1])
    if scheme is SchemeTag.SCHEME_I:
        phi_n = np.exp(logw_n)
        gv_n = gv_ref
        a = h_sensitivity(model, states[:, sub], y_path[None, sub, :])
        z_g = (gv_ref * phi_ref)[:, None, None, None] * a
        z_1 = phi_ref[:, None, None, None] * a
    else:
        coarse, c_failed = particle_paths(model, y_path, x0, block_sums(dB, n), n)
        failed = failed | c_failed
        phi_n = np.exp(log_weight(model, coarse, y_path[:: n_fine // n], n))
        gv_n = g.fn(coarse[:, -1])
        grads = [g.grad(states[:, -1]), np.zeros((M, model.e))]
        values = [gv_ref, np.ones(M)]
        (z_g, z_1), failed = _transported_values(
            model, grads, values, states, y_path, dB, failed,
            h_sq_drift_factor, chunk, stride, phi=phi_ref)

    ok = ~failed
    if ok.sum() < 2:
        raise EstimationError("insufficient surviving particles")
    m = int(ok.sum())
    root_n = math.sqrt(n)
    ref_factor = 1.0 - n / n_fine

    diff = gv_ref[ok] * phi_ref[ok] - gv_n[ok] * phi_n[ok]
    raw = math.fsum(diff) / m
    dvar = math.fsum((diff - raw) ** 2) / (m - 1)
    err_se = root_n * math.sqrt(dvar / m)

    w_ref, w_n = phi_ref[ok], phi_n[ok]
    vg_ref, vg_n = gv_ref[ok] * w_ref, gv_n[ok] * w_n
    pi_ref = math.fsum(vg_ref) / math.fsum(w_ref)
    pi_n = math.fsum(vg_n) / math.fsum(w_n)
    infl = ((vg_ref - pi_ref * w_ref) / (math.fsum(w_ref) / m)
            - (vg_n - pi_n * w_n) / (math.fsum(w_n) / m))
    nvar = float(np.var(infl, ddof=1))
    norm_se = root_n * math.sqrt(nvar / m)

    est = _estimate_from_values(z_g, failed, times,
                                "I" if scheme is SchemeTag.SCHEME_I else "II")
    V_mu, V_mu_se = _mu_from_values(z_g, z_1, phi_ref, gv_ref, ok, times, sign)
    V_mu_alt, _ = _mu_from_values(z_g, z_1, phi_ref, gv_ref, ok, times, -sign)

    return PathResult(
        path_index=lattice.path_index,
        scheme="I" if scheme is SchemeTag.SCHEME_I else "II", n=n,
        rescaled_error=root_n * raw,
        error_stderr=err_se,
        V_hat=est.V_hat, V_hat_stderr=est.V_hat_stderr,
        V_eff=est.V_hat * ref_factor + err_se ** 2,
        normalized_error=root_n * (pi_ref - pi_n),
        normalized_stderr=norm_se,
        V_mu=V_mu, V_mu_stderr=V_mu_se,
        V_mu_eff=V_mu * ref_factor + norm_se ** 2,
        V_mu_alt=V_mu_alt,
        V_mu_alt_eff=V_mu_alt * ref_factor + norm_se ** 2,
        failures=int(failed.sum()), sign=sign)

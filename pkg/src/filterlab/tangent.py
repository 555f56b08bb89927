"""First-variation flow and asymptotic-variance estimators.

The augmented state (X, log Phi) in R^{e+1} carries a linear first-variation
SDE whose flow matrix E transports pathwise derivatives of the Euler map.
Because the coefficients do not depend on the log-weight coordinate, E has
the block form [[J, 0], [r, 1]] with J the e x e signal Jacobian.

The rescaled discretization error of the weighted filter is asymptotically
mixed normal; its conditional variance given the observation path is

    V = 1/2 sum_{i,j} int_0^1 |u_s^{ij}(g)|^2 ds,

where u is a conditional expectation over the signal noise.  Two variants:

* density-only scheme: u_s^{ij} is the particle mean of
  g(X_1) (sum_k d_{x_k}h_i v_{kj} + d_{y_j}h_i)(X_s, Y_s) Phi_1;
* fully discretized scheme: the integrand at time s is transported to time 1
  through the flow, u_s^{ij} = mean of
  (sum_k d_k g(X_1) E_1^{kk'} + g(X_1) E_1^{(e+1)k'})
  (E_s^{-1})^{k'k''} f_s^{ijk''} Phi_1,
  the chain rule applied to g(X_1) exp(log Phi_1) along the augmented flow.

The normalized (ratio-filter) analogue mu subtracts the product of the
filtered test function and the filtered integrand; the relative sign of the
product term is configurable because the two error decompositions fix it
only up to convention, and the mixed-normal cross-validation arbitrates.

The drift of row e+1 of the flow uses the coefficient d_x(-1/2 |h|^2); the
factor is likewise configurable (``h_sq_drift_factor``) for sensitivity
runs, with -1/2 as the default.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .euler import brownian_y_path, particle_paths
from .girsanov import SchemeTag, draw_particles, log_weight, EstimationError
from .lattice import BrownianLattice, LevelError
from .models import FilterModel, TestFunction

_DEFAULT_DRIFT_FACTOR = -0.5
_INV_TOL = 1e-8


@dataclass(frozen=True)
class TangentFlow:
    """Flow matrices of the first-variation SDE on the grid.

    ``E`` has shape (..., n+1, e+1, e+1) with the leading axes a particle
    batch; ``E[..., 0, :, :]`` is the identity.
    """

    times: np.ndarray
    E: np.ndarray
    E_inv: Optional[np.ndarray] = None


@dataclass(frozen=True)
class VarianceEstimate:
    """Grid variance integrand and the conditional variance it integrates to.

    ``u`` has shape (n+1, d, d): the particle-mean integrand at each grid
    time; ``V_hat`` is 1/2 sum_{ij} int |u|^2 ds by the trapezoid rule with
    the O(1/M) Monte Carlo inflation of u^2 subtracted.
    """

    times: np.ndarray
    u: np.ndarray
    u_stderr: np.ndarray
    V_hat: float
    V_hat_stderr: float
    M: int
    failures: int
    scheme: str
    sign: float = 0.0


def _generator(model: FilterModel, x, y, dt, dB, dY,
               h_sq_drift_factor=_DEFAULT_DRIFT_FACTOR):
    """One-step increment matrix G with E_next = E + G @ E.

    Batch shapes: x (..., e), y (..., d) or (d,), dB (..., e), dY (..., d).
    The last column of G is zero: no coefficient reads the weight coordinate.
    """
    e = model.e
    batch = np.broadcast_shapes(np.shape(x)[:-1], np.shape(dB)[:-1])
    G = np.zeros(batch + (e + 1, e + 1))
    dY = np.broadcast_to(dY, batch + (model.d,))
    G[..., :e, :e] = (model.db_dx(x, y) * dt
                      + np.einsum("...ilk,...l->...ik", model.dsigma_dx(x, y), dB)
                      + np.einsum("...ijk,...j->...ik", model.dv_dx(x, y), dY))
    h = model.h(x, y)
    dh_dx = model.dh_dx(x, y)
    G[..., e, :e] = (2.0 * h_sq_drift_factor * np.einsum("...i,...ik->...k", h, dh_dx) * dt
                     + np.einsum("...jk,...j->...k", dh_dx, dY))
    return G


def tangent_step(model: FilterModel, state, y_state, E_matrix, dt, dB, dY,
                 h_sq_drift_factor=_DEFAULT_DRIFT_FACTOR):
    """Single Euler step of the flow matrix along a reference trajectory."""
    G = _generator(model, state, y_state, dt, dB, dY, h_sq_drift_factor)
    out = E_matrix + G @ E_matrix
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite tangent flow entries")
    return out


def compute_tangent_flow(model: FilterModel, states: np.ndarray,
                         y_grid: np.ndarray, dB: np.ndarray,
                         h_sq_drift_factor=_DEFAULT_DRIFT_FACTOR) -> TangentFlow:
    """Flow matrices along a batch of trajectories.

    ``states``: (..., n+1, e) grid paths; ``y_grid``: (n+1, d) the matching
    observation grid; ``dB``: (..., n, e) the increments that drove them.
    """
    return _strided_flow(model, states, y_grid, dB, h_sq_drift_factor, 1)


def inverse_flow(flow: TangentFlow, tol: float = _INV_TOL, check: bool = True):
    """Per-index direct inverses of the flow matrices.

    Returns (E_inv, singular) where ``singular`` flags batch members whose
    flow is numerically singular at some grid index; those inverses are
    unreliable and the callers exclude the flagged particles.  ``check``
    additionally verifies the inverse residual against ``tol`` (skippable
    in hot loops where the determinant screen suffices).
    """
    E = flow.E
    e1 = E.shape[-1]
    if e1 == 2:
        det = E[..., 0, 0] * E[..., 1, 1] - E[..., 0, 1] * E[..., 1, 0]
    else:
        det = np.linalg.det(E)
    bad = ~np.isfinite(det) | (np.abs(det) < 1e-300)
    safe = np.where(bad[..., None, None], np.eye(e1), E)
    E_inv = np.linalg.inv(safe)
    singular = bad.any(axis=-1)
    if check:
        resid = np.abs(safe @ E_inv - np.eye(e1)).max(axis=(-1, -2))
        singular = singular | (resid > tol).any(axis=-1)
    return E_inv, singular


def f_coeff(model: FilterModel, x, y) -> np.ndarray:
    """Coefficient tensor f^{ijk''}, shape (..., d, d, e+1).

    Rows k'' <= e:  sum_l d_{x_l} v_{k''i} v_{lj} + d_{y_j} v_{k''i};
    row e+1:        sum_l d_{x_l} h_i     v_{lj} + d_{y_j} h_i.
    """
    e, d = model.e, model.d
    v = model.v(x, y)
    batch = np.asarray(v).shape[:-2]
    f = np.empty(batch + (d, d, e + 1))
    dv_dx = model.dv_dx(x, y)    # [k'', i, l] = d v_{k''i} / d x_l
    dv_dy = model.dv_dy(x, y)
    f[..., :e] = (np.einsum("...kil,...lj->...ijk", dv_dx, v)
                  + np.moveaxis(np.asarray(dv_dy), -3, -1))
    f[..., e] = (np.einsum("...il,...lj->...ij", model.dh_dx(x, y), v)
                 + model.dh_dy(x, y))
    return f


def h_sensitivity(model: FilterModel, x, y) -> np.ndarray:
    """Integrand sum_k d_{x_k}h_i v_{kj} + d_{y_j}h_i, shape (..., d, d).

    Deliberately a separate implementation from the last row of
    :func:`f_coeff` so the two can cross-check each other.
    """
    dh_dx = np.asarray(model.dh_dx(x, y))
    v = np.asarray(model.v(x, y))
    batch = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
    out = np.zeros(batch + (model.d, model.d))
    out += model.dh_dy(x, y)
    for k in range(model.e):
        out += dh_dx[..., :, k, None] * v[..., k, None, :]
    return out


def _estimate_from_values(z: np.ndarray, failed: np.ndarray, times: np.ndarray,
                          scheme: str, sign: float = 0.0) -> VarianceEstimate:
    """Reduce per-particle grid integrands z (M, n+1, d, d) to an estimate."""
    ok = ~failed
    if not ok.any():
        raise EstimationError("all particles failed")
    zz = z[ok]
    m = zz.shape[0]
    u = zz.mean(axis=0)
    var = zz.var(axis=0, ddof=1) if m > 1 else np.full_like(u, np.inf)
    # subtract the O(1/M) noise inflation of u^2 before integrating
    integrand = (u ** 2 - var / m).sum(axis=(1, 2))
    V_hat = 0.5 * float(trapezoid(integrand, times))
    q = trapezoid(np.einsum("sij,psij->ps", u, zz), times, axis=-1)
    se = float(np.std(q, ddof=1) / math.sqrt(m)) if m > 1 else float("inf")
    return VarianceEstimate(times=times, u=u, u_stderr=np.sqrt(var / m),
                            V_hat=V_hat, V_hat_stderr=se, M=z.shape[0],
                            failures=int(failed.sum()), scheme=scheme, sign=sign)


def _scheme_one_values(model, g, states, y_path, failed):
    """Per-particle g(X_1) a_s(X_s, Y_s) Phi_1 on the fine grid."""
    n = states.shape[1] - 1
    logw = log_weight(model, states, y_path, n)
    weight = g.fn(states[:, -1]) * np.exp(logw)       # (M,)
    a = h_sensitivity(model, states, y_path[None, :, :])
    return weight[:, None, None, None] * a


def u_estimate_scheme_I(model: FilterModel, lattice: BrownianLattice,
                        g: TestFunction, M: int, seed: int,
                        y_path: Optional[np.ndarray] = None) -> VarianceEstimate:
    """Variance integrand of the density-only scheme for one observation path."""
    if y_path is None:
        y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    states, failed = particle_paths(model, y_path, x0, dB, lattice.n_fine)
    z = _scheme_one_values(model, g, states, y_path, failed)
    return _estimate_from_values(z, failed, lattice.times, "I")


def _strided_flow(model, states, y_grid, dB, h_sq_drift_factor, stride):
    """Flow matrices stored only at every ``stride``-th grid index.

    The recursion still runs on the full grid; only the storage (and hence
    the inverse/integrand work downstream) is thinned.
    """
    n = states.shape[-2] - 1
    if n % stride:
        raise LevelError(f"stride {stride} does not divide the grid {n}")
    dt = 1.0 / n
    dY = np.diff(y_grid, axis=0)
    G = _generator(model, states[..., :-1, :], y_grid[:-1], dt, dB, dY,
                   h_sq_drift_factor)
    e1 = model.e + 1
    batch = G.shape[:-3]
    times = np.linspace(0.0, 1.0, n + 1)[::stride]
    if model.e == 1:
        # block structure [[J, 0], [r, 1]]: J_{k+1} = (1 + G00) J_k and
        # r_{k+1} = r_k + G10 J_k close under cumprod/cumsum, no step loop
        J = np.ones(batch + (n + 1,))
        np.cumprod(1.0 + G[..., 0, 0], axis=-1, out=J[..., 1:])
        r = np.zeros(batch + (n + 1,))
        np.cumsum(G[..., 1, 0] * J[..., :-1], axis=-1, out=r[..., 1:])
        E = np.zeros(batch + (n // stride + 1, e1, e1))
        E[..., 0, 0] = J[..., ::stride]
        E[..., 1, 0] = r[..., ::stride]
        E[..., 1, 1] = 1.0
        return TangentFlow(times=times, E=E)
    E = np.empty(batch + (n // stride + 1, e1, e1))
    E[..., 0, :, :] = np.eye(e1)
    cur = np.broadcast_to(np.eye(e1), batch + (e1, e1)).copy()
    for k in range(n):
        cur = cur + G[..., k, :, :] @ cur
        if (k + 1) % stride == 0:
            E[..., (k + 1) // stride, :, :] = cur
    return TangentFlow(times=times, E=E)


def _transported_values(model, grads, values, states, y_path, dB, failed,
                        h_sq_drift_factor, chunk, stride=1, phi=None):
    """Flow-transported integrand values for several terminal functionals.

    Each functional is g(X_1) Phi_1 for some terminal test function g; its
    pathwise derivative with respect to the augmented state at time s pairs
    grad g(X_1) with the signal rows of the flow and g(X_1) itself with the
    log-weight row.  ``grads`` and ``values`` list the (M, e) gradient and
    (M,) value arrays per functional; one flow pass serves every entry, so
    sharing the flow halves or better the dominant cost.  ``stride`` thins
    the s-grid on which the integrand is stored (the flow itself always
    runs on the full grid).  Returns (list of z arrays of shape
    (M, n // stride + 1, d, d), failed).
    """
    M, n1 = states.shape[0], states.shape[1]
    n = n1 - 1
    if phi is None:
        phi = np.exp(log_weight(model, states, y_path, n))
    d = model.d
    zs = [np.empty((M, n // stride + 1, d, d)) for _ in grads]
    new_failed = failed.copy()
    sub = slice(None, None, stride)
    for lo in range(0, M, chunk):
        hi = min(lo + chunk, M)
        st = states[lo:hi]
        flow = _strided_flow(model, st, y_path, dB[lo:hi],
                             h_sq_drift_factor, stride)
        E_inv, singular = inverse_flow(flow, check=False)
        new_failed[lo:hi] |= singular
        E1 = flow.E[:, -1]                              # (m, e+1, e+1)
        f = f_coeff(model, st[:, sub], y_path[None, sub, :])
        for z, gr, val in zip(zs, grads, values):
            c = (np.einsum("pk,pkl->pl", gr[lo:hi], E1[:, :model.e, :])
                 + val[lo:hi, None] * E1[:, model.e, :])
            w = np.einsum("pl,pslk->psk", c, E_inv)     # (m, n/stride+1, e+1)
            z[lo:hi] = np.einsum("psk,psijk->psij", w, f)
    for z in zs:
        z *= phi[:, None, None, None]
    return zs, new_failed


def _scheme_two_values(model, g, states, y_path, dB, failed,
                       h_sq_drift_factor, chunk, constant_one=False,
                       stride=1):
    """Single-functional wrapper around :func:`_transported_values`.

    ``constant_one`` replaces g by the constant test function 1, whose
    gradient vanishes and whose terminal value is one; that variant feeds
    the normalized-error functional.
    """
    M = states.shape[0]
    if constant_one:
        gr = np.zeros((M, model.e))
        val = np.ones(M)
    else:
        gr = g.grad(states[:, -1])
        val = g.fn(states[:, -1])
    zs, failed = _transported_values(model, [gr], [val], states, y_path, dB,
                                     failed, h_sq_drift_factor, chunk, stride)
    return zs[0], failed


def u_estimate_scheme_II(model: FilterModel, lattice: BrownianLattice,
                         g: TestFunction, M: int, seed: int,
                         y_path: Optional[np.ndarray] = None,
                         h_sq_drift_factor=_DEFAULT_DRIFT_FACTOR,
                         chunk: int = 256) -> VarianceEstimate:
    """Variance integrand of the fully discretized scheme."""
    if y_path is None:
        y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    states, failed = particle_paths(model, y_path, x0, dB, lattice.n_fine)
    z, failed = _scheme_two_values(model, g, states, y_path, dB, failed,
                                   h_sq_drift_factor, chunk)
    return _estimate_from_values(z, failed, lattice.times, "II")


def mu_estimate(model: FilterModel, lattice: BrownianLattice, g: TestFunction,
                scheme: SchemeTag, M: int, seed: int,
                y_path: Optional[np.ndarray] = None, sign: float = -1.0,
                h_sq_drift_factor=_DEFAULT_DRIFT_FACTOR,
                chunk: int = 256) -> VarianceEstimate:
    """Variance integrand of the normalized (ratio) filter error.

    mu_s = rho(D_s(g))/rho(1) + sign * (rho(g)/rho(1)) (rho(D_s(1))/rho(1)),
    with D the scheme's integrand (a_s for the density-only scheme, the
    flow-transported tensor otherwise) and sign in {+1, -1}, default -1.
    """
    if sign not in (-1.0, 1.0, -1, 1):
        raise ValueError("sign convention must be +1 or -1")
    if scheme is SchemeTag.REFERENCE:
        raise ValueError("mu is defined for the approximating schemes only")
    if y_path is None:
        y_path = brownian_y_path(lattice)
    x0, dB = draw_particles(model, lattice, M, seed)
    states, failed = particle_paths(model, y_path, x0, dB, lattice.n_fine)
    n = lattice.n_fine
    phi = np.exp(log_weight(model, states, y_path, n))
    gv = g.fn(states[:, -1])
    if scheme is SchemeTag.SCHEME_I:
        a = h_sensitivity(model, states, y_path[None, :, :])
        z_g = (gv * phi)[:, None, None, None] * a
        z_1 = phi[:, None, None, None] * a
    else:
        z_g, failed = _scheme_two_values(model, g, states, y_path, dB, failed,
                                         h_sq_drift_factor, chunk)
        z_1, failed = _scheme_two_values(model, g, states, y_path, dB, failed,
                                         h_sq_drift_factor, chunk,
                                         constant_one=True)
    ok = ~failed
    if not ok.any():
        raise EstimationError("all particles failed")
    m = int(ok.sum())
    B = phi[ok].mean()
    A = z_g[ok].mean(axis=0)                     # (n+1, d, d)
    D = z_1[ok].mean(axis=0)
    C = (gv[ok] * phi[ok]).mean()
    pi_g = C / B
    mu = A / B + sign * pi_g * (D / B)
    # delta-method influence of each particle on mu, then on V_hat
    infl = ((z_g[ok] - A * (phi[ok] / B)[:, None, None, None]) / B
            + sign * ((gv[ok] * phi[ok] - C * phi[ok] / B)[:, None, None, None]
                      * (D / B) / B
                      + pi_g * (z_1[ok] - D * (phi[ok] / B)[:, None, None, None]) / B))
    var = infl.var(axis=0, ddof=1) if m > 1 else np.full_like(mu, np.inf)
    integrand = (mu ** 2 - var / m).sum(axis=(1, 2))
    times = lattice.times
    V_hat = 0.5 * float(trapezoid(integrand, times))
    q = trapezoid(np.einsum("sij,psij->ps", mu, infl), times, axis=-1)
    se = float(np.std(q, ddof=1) / math.sqrt(m)) if m > 1 else float("inf")
    return VarianceEstimate(times=times, u=mu, u_stderr=np.sqrt(var / m),
                            V_hat=V_hat, V_hat_stderr=se, M=M,
                            failures=int(failed.sum()),
                            scheme="I" if scheme is SchemeTag.SCHEME_I else "II",
                            sign=float(sign))


def variation_of_constants_check(model: FilterModel,
                                 lattice: BrownianLattice) -> float:
    """Residual of the variation-of-constants identity on one lattice.

    For the scalar driven linear SDE d phi = a phi dZ + dG with Z = W and
    G correlated with Z (d<Z,G> = c dt), the identity

        phi_t = psi_t int_0^t (psi_s^{-1} dG_s - psi_s^{-1} a_s c ds)

    with psi the stochastic exponential of int a dZ must agree with direct
    Euler integration of the SDE.  The bounded coefficient a is built from
    the model's observation function along the lattice's Brownian paths.
    Returns |difference at t = 1|; the L2 norm over lattices decays like
    n_fine^{-1/2}.
    """
    n = lattice.n_fine
    dt = 1.0 / n
    W = lattice.w_path()
    B = lattice.b_path()
    a = model.h(B[:-1, : model.e], W[:-1, : model.d])[:, 0]
    dZ = lattice.dW[:, 0]
    c = 0.5
    dG = 0.3 * dt + c * lattice.dW[:, 0] + lattice.dB[:, 0]

    phi = 0.0
    for k in range(n):
        phi = phi + a[k] * phi * dZ[k] + dG[k]

    psi = np.empty(n + 1)
    psi[0] = 1.0
    np.cumprod(1.0 + a * dZ, out=psi[1:])
    integral = math.fsum(dG / psi[:-1] - a * c * dt / psi[:-1])
    return abs(phi - psi[-1] * integral)

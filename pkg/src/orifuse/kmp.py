"""Kernelized trajectory regression in the angle-axis chart.

The model solves a covariance-weighted ridge problem over stacked chart states
eta = [psi, psi_dot] (optionally extended with a psi_ddot block for
acceleration shaping) and predicts through the kernel form

    eta(t*) = k*(t*) (K + lambda * Sigma)^-1 mu.

Kernel blocks couple the function and derivative channels: for the scalar
Gaussian kernel g(a, b) = exp(-l (a - b)^2) the (p, q) block entry is
d^p/da^p d^q/db^q g, tensored with I_3.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import so3
from ._kernels import rot_exp, rot_exp_many, rot_log, rot_log_many
from .errors import ChartBoundaryError, FactorizationFailure, SeriesTooShort

DEFAULT_DELTA_T = 1e-3
# minimum chart-distance of a via-point from the ball boundary
CHART_MARGIN = 1e-3
VIA_TIME_TOL = 1e-9
_JITTERS = (0.0, 1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel and regularization parameters.

    l is the inverse squared length scale of the Gaussian kernel, lam the
    ridge factor, lambda_a the optional acceleration weight.  order selects
    the derivative blocks: "pv" couples (psi, psi_dot), "pva" adds psi_ddot.
    """

    l: float = 0.01
    lam: float = 1.0
    lambda_a: float | None = None
    order: str = "pv"

    def __post_init__(self):
        if self.l <= 0:
            raise ValueError("l must be positive")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.lambda_a is not None and self.lambda_a <= 0:
            raise ValueError("lambda_a must be positive when given")
        if self.order not in ("pv", "pva"):
            raise ValueError("order must be 'pv' or 'pva'")
        if self.order == "pva" and self.lambda_a is None:
            raise ValueError("order 'pva' requires lambda_a")

    @property
    def n_blocks(self):
        return 3 if self.order == "pva" else 2

    @property
    def state_dim(self):
        return 3 * self.n_blocks


@dataclass(frozen=True)
class ViaPointSpec:
    """Desired (time, orientation, world-frame angular velocity, covariance).

    covariance is 6x6, or 9x9 (block diagonal) when an explicit acceleration
    precision accompanies the point.
    """

    t: float
    rotation: np.ndarray
    omega: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        R = so3.check_rotation(self.rotation, name="via rotation")
        omega = np.asarray(self.omega, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if omega.shape != (3,):
            raise ValueError("omega must be a 3-vector")
        if cov.shape not in ((6, 6), (9, 9)):
            raise ValueError("covariance must be 6x6 or 9x9")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("covariance must be positive definite")
        if cov.shape == (9, 9) and (
            np.any(cov[:6, 6:] != 0.0) or np.any(cov[6:, :6] != 0.0)
        ):
            raise ValueError("9x9 via covariance must be block diagonal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class ExtendedReference:
    """Reference rows plus transformed via-points, time sorted.

    acc_covariances keeps explicit per-row acceleration blocks coming from
    9x9 via covariances; NaN rows mean "use the default (1/lambda_a) I".
    """

    times: np.ndarray        # (N,)
    means: np.ndarray        # (N, D) with D in {6, 9}
    covariances: np.ndarray  # (N, D, D)
    acc_covariances: np.ndarray | None = None  # (N, 3, 3)

    def __len__(self):
        return self.times.shape[0]

    @property
    def state_dim(self):
        return self.means.shape[1]


@dataclass(frozen=True)
class OrientationTrajectory:
    """Recovered orientation trajectory with world-frame angular velocity."""

    times: np.ndarray        # (N,)
    rotations: np.ndarray    # (N, 3, 3)
    omega_world: np.ndarray  # (N, 3)

    def __len__(self):
        return self.times.shape[0]


def transform_via_point(vp, R_aux, delta_t=DEFAULT_DELTA_T):
    """Express a desired point in the chart of R_aux.

    psi = log(R_aux^T R); the chart velocity comes from stepping the desired
    motion forward by delta_t:

        R_plus = R * exp(R^T omega * delta_t)
        psi_dot = (log(R_aux^T R_plus) - psi) / delta_t

    Returns (t, eta, covariance) with eta = [psi, psi_dot].
    """
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    R_aux = so3.check_rotation(R_aux, name="R_aux")
    psi = rot_log(np.ascontiguousarray(R_aux.T @ vp.rotation))
    margin = CHART_MARGIN + 2.0 * delta_t * float(np.linalg.norm(vp.omega))
    if np.linalg.norm(psi) > np.pi - margin:
        raise ChartBoundaryError(
            f"via-point at t={vp.t} lies {np.pi - np.linalg.norm(psi):.2e} rad from the "
            "chart boundary; choose an auxiliary frame closer to the target"
        )
    body_step = vp.rotation.T @ vp.omega * delta_t
    R_plus = vp.rotation @ rot_exp(np.ascontiguousarray(body_step))
    psi_plus = rot_log(np.ascontiguousarray(R_aux.T @ R_plus))
    psi_dot = (psi_plus - psi) / delta_t
    return vp.t, np.concatenate([psi, psi_dot]), vp.covariance.copy()


def extend_reference(ref, vias, R_aux, delta_t=DEFAULT_DELTA_T):
    """Union of the reference trajectory and transformed via-points.

    A via-point whose time coincides with a reference time (within 1e-9 s)
    replaces that reference row: the user's tighter covariance wins.
    """
    times = list(ref.times)
    means = [m for m in ref.means]
    covs = [c for c in ref.covariances]
    acc = [np.full((3, 3), np.nan) for _ in times]
    for vp in vias:
        t, eta, cov = transform_via_point(vp, R_aux, delta_t)
        if cov.shape == (9, 9):
            cov6 = cov[:6, :6]
            acc_block = cov[6:, 6:]
        else:
            cov6 = cov
            acc_block = np.full((3, 3), np.nan)
        hits = [i for i, ti in enumerate(times) if abs(ti - t) <= VIA_TIME_TOL]
        if hits:
            i = hits[0]
            times[i], means[i], covs[i], acc[i] = t, eta, cov6, acc_block
        else:
            times.append(t)
            means.append(eta)
            covs.append(cov6)
            acc.append(acc_block)
    order = np.argsort(np.asarray(times), kind="stable")
    times = np.asarray(times)[order]
    if times.size >= 2 and np.any(np.diff(times) <= 0):
        raise ValueError("reference times must be strictly increasing after the merge")
    means = np.asarray(means)[order]
    covs = np.asarray(covs)[order]
    acc = np.asarray(acc)[order]
    if np.all(np.isnan(acc)):
        acc = None
    return ExtendedReference(times, means, covs, acc)


def augment_for_acceleration(ext, lambda_a):
    """Add zero acceleration targets weighted by lambda_a.

    Every mean gains a zero psi_ddot block; every covariance gains a
    (1/lambda_a) I_3 block, except rows that carry an explicit acceleration
    covariance from a 9x9 via specification.
    """
    if lambda_a <= 0:
        raise ValueError("lambda_a must be positive")
    if ext.state_dim != 6:
        raise ValueError("reference is already acceleration-augmented")
    n = len(ext)
    means = np.zeros((n, 9))
    means[:, :6] = ext.means
    covs = np.zeros((n, 9, 9))
    covs[:, :6, :6] = ext.covariances
    default = np.eye(3) / lambda_a
    for i in range(n):
        block = default
        if ext.acc_covariances is not None and not np.any(np.isnan(ext.acc_covariances[i])):
            block = ext.acc_covariances[i]
        covs[i, 6:, 6:] = block
    return ExtendedReference(ext.times.copy(), means, covs, None)


def gaussian_scalar_blocks(a, b, l, order):
    """Scalar kernel derivative table for the Gaussian kernel.

    Returns S with S[p, q] = d^p/da^p d^q/db^q exp(-l (a - b)^2) evaluated on
    the grid a x b, shape (order, order, len(a), len(b)).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a[:, None] - b[None, :]
    g = np.exp(-l * d**2)
    s = np.empty((order, order) + d.shape)
    s[0, 0] = g
    s[0, 1] = 2.0 * l * d * g
    s[1, 0] = -s[0, 1]
    s[1, 1] = (2.0 * l - 4.0 * l**2 * d**2) * g
    if order == 3:
        s[0, 2] = (4.0 * l**2 * d**2 - 2.0 * l) * g
        s[2, 0] = s[0, 2]
        s[1, 2] = (12.0 * l**2 * d - 8.0 * l**3 * d**3) * g
        s[2, 1] = -s[1, 2]
        s[2, 2] = (16.0 * l**4 * d**4 - 48.0 * l**3 * d**2 + 12.0 * l**2) * g
    return s


class KmpModel:
    """Factorized kernel regression model; immutable after build."""

    def __init__(self, times, alpha, cfg, scalar_blocks):
        self.times = times
        self.alpha = alpha  # (N, n_blocks, 3)
        self.cfg = cfg
        self._scalar_blocks = scalar_blocks

    def predict(self, t_star):
        """Stacked (psi, psi_dot[, psi_ddot]) at a single query time."""
        return self.predict_many(np.array([float(t_star)]))[0]

    def predict_many(self, t_stars, chunk=2048):
        """Predictions on a batch of query times, shape (Q, state_dim)."""
        t_stars = np.asarray(t_stars, dtype=float)
        nb = self.cfg.n_blocks
        out = np.empty((t_stars.shape[0], nb * 3))
        for lo in range(0, t_stars.shape[0], chunk):
            hi = min(lo + chunk, t_stars.shape[0])
            s = self._scalar_blocks(t_stars[lo:hi], self.times, nb)
            eta = np.einsum("pqab,bqr->apr", s, self.alpha)
            out[lo:hi] = eta.reshape(hi - lo, nb * 3)
        return out


def build_model(ext, cfg, scalar_blocks=None):
    """Assemble and factorize (K + lambda * Sigma), precomputing the solve.

    scalar_blocks(a, b, order) may override the Gaussian derivative table;
    the kernel-trick equivalence tests inject an explicit finite basis here.
    """
    if len(ext) < 1:
        raise ValueError("need at least one reference point")
    if ext.state_dim != cfg.state_dim:
        raise ValueError(
            f"reference state dim {ext.state_dim} does not match kernel order "
            f"'{cfg.order}' (expects {cfg.state_dim})"
        )
    if np.any(np.diff(ext.times) <= 0):
        raise ValueError("reference times must be strictly increasing")
    if scalar_blocks is None:
        def scalar_blocks(a, b, order, _l=cfg.l):
            return gaussian_scalar_blocks(a, b, _l, order)
    nb = cfg.n_blocks
    n = len(ext)
    s = scalar_blocks(ext.times, ext.times, nb)
    gram_small = np.ascontiguousarray(s.transpose(2, 0, 3, 1)).reshape(n * nb, n * nb)
    gram = np.kron(gram_small, np.eye(3))
    dim = nb * 3
    m = gram.copy()
    for i in range(n):
        m[i * dim:(i + 1) * dim, i * dim:(i + 1) * dim] += cfg.lam * ext.covariances[i]
    mu = ext.means.reshape(n * dim)
    factor = None
    for jitter in _JITTERS:
        try:
            factor = cho_factor(m + jitter * np.eye(m.shape[0]) if jitter else m, lower=True)
            break
        except np.linalg.LinAlgError:
            continue
    if factor is None:
        raise FactorizationFailure(
            "K + lambda*Sigma is not positive definite even with 1e-8 jitter; "
            "covariance floor is likely too small"
        )
    alpha = cho_solve(factor, mu).reshape(n, nb, 3)
    return KmpModel(ext.times.copy(), alpha, cfg, scalar_blocks)


def angular_velocities(rotations, dt):
    """World-frame angular velocity of a uniformly sampled rotation sequence.

    Central differences of the relative logs in the interior, second-order
    one-sided stencils at the ends.
    """
    Rs = np.asarray(rotations, dtype=float)
    n = Rs.shape[0]
    if n < 2:
        raise SeriesTooShort("need at least 2 rotations")
    if dt <= 0:
        raise ValueError("dt must be positive")
    omega = np.empty((n, 3))
    if n == 2:
        w = rot_log(np.ascontiguousarray(Rs[0].T @ Rs[1])) / dt
        omega[0] = Rs[0] @ w
        omega[1] = Rs[1] @ w
        return omega
    rel = np.einsum("nji,njk->nik", Rs[:-2], Rs[2:])
    body = rot_log_many(np.ascontiguousarray(rel)) / (2.0 * dt)
    omega[1:-1] = np.einsum("nij,nj->ni", Rs[1:-1], body)
    first = (
        4.0 * rot_log(np.ascontiguousarray(Rs[0].T @ Rs[1]))
        - rot_log(np.ascontiguousarray(Rs[0].T @ Rs[2]))
    ) / (2.0 * dt)
    last = (
        4.0 * rot_log(np.ascontiguousarray(Rs[-1].T @ Rs[-2]))
        - rot_log(np.ascontiguousarray(Rs[-1].T @ Rs[-3]))
    ) / (-2.0 * dt)
    omega[0] = Rs[0] @ first
    omega[-1] = Rs[-1] @ last
    return omega


def reproduce_orientation_trajectory(model, R_aux, times):
    """Recover R(t) = R_aux exp(psi(t)) on a uniform grid, with velocities."""
    R_aux = so3.check_rotation(R_aux, name="R_aux")
    times = np.asarray(times, dtype=float)
    if times.shape[0] < 2:
        raise SeriesTooShort("need at least 2 grid points")
    steps = np.diff(times)
    if np.any(steps <= 0):
        raise ValueError("grid must be strictly increasing")
    if not np.allclose(steps, steps[0], rtol=0.0, atol=1e-9):
        raise ValueError("grid must be uniform for velocity recovery")
    eta = model.predict_many(times)
    psis = np.ascontiguousarray(eta[:, :3])
    rotations = np.einsum("ij,njk->nik", R_aux, rot_exp_many(psis))
    omega = angular_velocities(rotations, float(steps[0]))
    return OrientationTrajectory(times.copy(), rotations, omega)

"""Boundary-aware geometry of SO(3) and its angle-axis chart.

Rotations are plain 3x3 numpy arrays.  The chart maps rotations to the closed
ball of radius pi in R^3 (direction = axis, norm = angle); boundary points are
canonicalized onto the positive half sphere so the map is one-to-one.  All
functions are pure and all arrays returned are fresh.
"""

import numpy as np

from . import _kernels
from .errors import NotARotation, SeriesTooShort

# Frobenius tolerance for R^T R - I and |det(R) - 1|
ORTHOGONALITY_TOL = 1e-8
# allowed overshoot of ||log(R)|| beyond pi from rounding
BALL_TOL = 1e-9

_IDENTITY = np.eye(3)


def _as_matrix(R, name):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise NotARotation(f"{name} has shape {R.shape}, expected (3, 3)")
    return R


def is_rotation(R, tol=ORTHOGONALITY_TOL):
    """True when R is special orthogonal within the Frobenius tolerance."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (
        np.linalg.norm(R.T @ R - _IDENTITY) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def check_rotation(R, tol=ORTHOGONALITY_TOL, name="R"):
    R = _as_matrix(R, name)
    if not np.all(np.isfinite(R)):
        raise NotARotation(f"{name} contains non-finite entries")
    err = np.linalg.norm(R.T @ R - _IDENTITY)
    if err > tol:
        raise NotARotation(f"{name} is not orthogonal: ||R^T R - I||_F = {err:.3e}")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise NotARotation(f"{name} has det = {det:.6f}, expected +1")
    return R


def orthonormalize(R):
    """Nearest rotation by polar decomposition.

    Explicit repair step for finite-precision inputs; never applied silently.
    Rejects reflections (det < 0).
    """
    R = _as_matrix(R, "R")
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        raise NotARotation("input is closer to a reflection than a rotation")
    return out


def hat(psi):
    """Skew-symmetric matrix of a 3-vector."""
    x, y, z = psi
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def exp_map(psi):
    """Rodrigues formula; total on R^3."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {psi.shape}")
    return _kernels.rot_exp(np.ascontiguousarray(psi))


def log_map(R, tol=ORTHOGONALITY_TOL):
    """Angle-axis chart coordinates of R, inside the closed pi-ball."""
    R = check_rotation(R, tol=tol)
    return _kernels.rot_log(np.ascontiguousarray(R))


def geodesic_distance(Ri, Rj, tol=ORTHOGONALITY_TOL):
    """Rotation angle of Ri^T Rj, the intrinsic metric on SO(3)."""
    Ri = check_rotation(Ri, tol=tol, name="Ri")
    Rj = check_rotation(Rj, tol=tol, name="Rj")
    return float(_kernels.rot_geodesic(np.ascontiguousarray(Ri), np.ascontiguousarray(Rj)))


def project_to_frame(R, R_aux, tol=ORTHOGONALITY_TOL):
    """Chart coordinates of R in the chart extended around R_aux."""
    R = check_rotation(R, tol=tol)
    R_aux = check_rotation(R_aux, tol=tol, name="R_aux")
    return _kernels.rot_log(np.ascontiguousarray(R_aux.T @ R))


def recover_orientation(psi, R_aux, tol=ORTHOGONALITY_TOL):
    """R_aux * exp(psi); psi may lie outside the pi-ball."""
    R_aux = check_rotation(R_aux, tol=tol, name="R_aux")
    psi = np.asarray(psi, dtype=float)
    return R_aux @ _kernels.rot_exp(np.ascontiguousarray(psi))


def exp_map_many(psis):
    psis = np.ascontiguousarray(np.atleast_2d(np.asarray(psis, dtype=float)))
    return _kernels.rot_exp_many(psis)


def log_map_many(Rs, tol=ORTHOGONALITY_TOL):
    Rs = np.asarray(Rs, dtype=float)
    for i, R in enumerate(Rs):
        if not is_rotation(R, tol):
            raise NotARotation(f"entry {i} is not a rotation")
    return _kernels.rot_log_many(np.ascontiguousarray(Rs))


def finite_difference_velocity(psi_series, dt):
    """Time derivative of a uniformly sampled chart trajectory.

    Central differences in the interior, second-order one-sided stencils at
    the ends; the output has the same length as the input.
    """
    psi = np.asarray(psi_series, dtype=float)
    if psi.ndim != 2 or psi.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) series, got shape {psi.shape}")
    n = psi.shape[0]
    if n < 2:
        raise SeriesTooShort(f"need at least 2 samples, got {n}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    vel = np.empty_like(psi)
    if n == 2:
        vel[0] = vel[1] = (psi[1] - psi[0]) / dt
        return vel
    vel[1:-1] = (psi[2:] - psi[:-2]) / (2.0 * dt)
    vel[0] = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * dt)
    vel[-1] = (3.0 * psi[-1] - 4.0 * psi[-2] + psi[-3]) / (2.0 * dt)
    return vel

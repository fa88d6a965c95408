"""Multi-via-point orchestration and trajectory fusion.

Each incomplete-orientation via-point (IOVP) gets its own tangent chart: the
demonstrations are re-projected around the via-point's target rotation, the
via covariance relaxes exactly one axis, and a full regression run produces a
component trajectory that satisfies that constraint at its own time.  A
Gaussian weight curve per component then drives a sequential memory-based
weighted rotation average that blends the components into one continuous
trajectory dominated by component k near its time t_k.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import so3
from ._kernels import (
    consecutive_geodesic_steps,
    memory_average_step,
    stateless_average,
)
from .errors import DomainOverlap, SeriesTooShort
from .kmp import ViaPointSpec, angular_velocities
from .pipeline import reproduce_with_via_points
from .rotavg import D_TH_DEFAULT, E_PSI_DEFAULT, HISTORY_CAPACITY

EPS_STRICT_DEFAULT = 1e-10
EPS_LOOSE_DEFAULT = 1e3
DELTA_T_DEFAULT = 2.4
# Under the non-interference principle the Gaussian leakage of the other
# curves at any point stays near 2*exp(-4.5) ~ 0.022; anything above this
# bound means the via domains genuinely overlap.
WEIGHT_SUM_SLACK = 0.05

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class IovpSpec:
    """A via-point with one optionally relaxed rotational degree of freedom.

    relaxed_axis selects the orientation-covariance entry that gets eps_loose
    (the remaining axes get eps_strict); None means a fully strict via-point.
    delta_t is the half-width of the Gaussian weight domain.
    """

    t: float
    rotation: np.ndarray
    omega: np.ndarray
    relaxed_axis: str | None = None
    eps_strict: float = EPS_STRICT_DEFAULT
    eps_loose: float = EPS_LOOSE_DEFAULT
    delta_t: float = DELTA_T_DEFAULT
    velocity_var: float | np.ndarray | None = None  # defaults to eps_strict
    orientation_var: np.ndarray | None = None  # overrides the relaxed-axis pattern

    def __post_init__(self):
        R = so3.check_rotation(self.rotation, name="IOVP rotation")
        omega = np.asarray(self.omega, dtype=float)
        if omega.shape != (3,):
            raise ValueError("omega must be a 3-vector")
        if self.relaxed_axis is not None and self.relaxed_axis not in _AXIS_INDEX:
            raise ValueError("relaxed_axis must be 'x', 'y', 'z' or None")
        if self.eps_strict <= 0 or self.eps_loose <= 0:
            raise ValueError("variance entries must be positive")
        if self.eps_strict >= self.eps_loose and self.relaxed_axis is not None:
            raise ValueError("eps_strict must be much smaller than eps_loose")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "omega", omega)

    def orientation_variances(self):
        if self.orientation_var is not None:
            return np.broadcast_to(np.asarray(self.orientation_var, dtype=float), (3,)).copy()
        var = np.full(3, self.eps_strict)
        if self.relaxed_axis is not None:
            var[_AXIS_INDEX[self.relaxed_axis]] = self.eps_loose
        return var

    def velocity_variances(self):
        v = self.eps_strict if self.velocity_var is None else self.velocity_var
        return np.broadcast_to(np.asarray(v, dtype=float), (3,)).copy()


@dataclass(frozen=True)
class WeightCurveSet:
    """Gaussian weight curves W_k plus the complementary baseline weight.

    W_k(t) = exp(-(t - t_k)^2 / (2 sigma_k^2)) with sigma_k = delta_t_k / 3;
    W_0(t) = 1 - sum_k W_k(t), so the partition sums to one exactly.
    """

    centers: np.ndarray      # (K,)
    half_widths: np.ndarray  # (K,)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        w = np.asarray(self.half_widths, dtype=float)
        if c.shape != w.shape or c.ndim != 1:
            raise ValueError("centers and half_widths must be matching 1-d arrays")
        if np.any(w <= 0):
            raise ValueError("half widths must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "half_widths", w)

    @property
    def n_curves(self):
        return self.centers.shape[0]

    def weight_matrix(self, times):
        """Columns [W_0, W_1, ..., W_K] on the grid; validates the overlap."""
        times = np.asarray(times, dtype=float)
        k = self.n_curves
        out = np.empty((times.shape[0], k + 1))
        for j in range(k):
            sigma = self.half_widths[j] / 3.0
            out[:, j + 1] = np.exp(-((times - self.centers[j]) ** 2) / (2.0 * sigma**2))
        total = out[:, 1:].sum(axis=1)
        if np.any(total > 1.0 + WEIGHT_SUM_SLACK):
            worst = float(times[np.argmax(total)])
            raise DomainOverlap(
                f"via weight curves sum to {total.max():.3f} > 1 at t = {worst:.3f}; "
                "via-point domains interfere (violated non-interference principle)"
            )
        out[:, 0] = 1.0 - total
        return out


@dataclass(frozen=True)
class FusedTrajectory:
    """Fused orientation trajectory plus the per-sample component weights."""

    times: np.ndarray        # (Q,)
    rotations: np.ndarray    # (Q, 3, 3)
    omega_world: np.ndarray  # (Q, 3)
    weights: np.ndarray      # (Q, K+1), columns [W_0, W_1, ..., W_K]

    def __len__(self):
        return self.times.shape[0]


def gauss_weight(t, t_bar, delta_t):
    """Gaussian weight with sigma = delta_t / 3; equals 1 at t = t_bar."""
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    sigma = delta_t / 3.0
    return float(math.exp(-((t - t_bar) ** 2) / (2.0 * sigma**2)))


def check_non_interference(iovps):
    """Reject weight domains that reach into a neighbor's center."""
    times = [vp.t for vp in iovps]
    if sorted(times) != times:
        raise DomainOverlap("IOVP times must be sorted")
    for k in range(len(iovps)):
        if k + 1 < len(iovps) and iovps[k].t + iovps[k].delta_t > iovps[k + 1].t + 1e-12:
            raise DomainOverlap(
                f"IOVP at t={iovps[k].t} has delta_t={iovps[k].delta_t} reaching past "
                f"the next via time {iovps[k + 1].t}"
            )
        if k > 0 and iovps[k].t - iovps[k].delta_t < iovps[k - 1].t - 1e-12:
            raise DomainOverlap(
                f"IOVP at t={iovps[k].t} has delta_t={iovps[k].delta_t} reaching past "
                f"the previous via time {iovps[k - 1].t}"
            )


def weight_curves_for(iovps):
    check_non_interference(iovps)
    return WeightCurveSet(
        np.array([vp.t for vp in iovps]),
        np.array([vp.delta_t for vp in iovps]),
    )


def via_spec_from_iovp(iovp, lambda_a=None):
    """Covariance-pattern translation of an IOVP into a via-point spec.

    The orientation block carries eps_loose on the relaxed axis and
    eps_strict elsewhere; the velocity block defaults to strict.  When
    lambda_a is given the spec gains the default (1/lambda_a) I acceleration
    block explicitly (9x9), keeping the augmented model well defined.
    """
    variances = np.concatenate([iovp.orientation_variances(), iovp.velocity_variances()])
    if lambda_a is not None:
        variances = np.concatenate([variances, np.full(3, 1.0 / lambda_a)])
    return ViaPointSpec(iovp.t, iovp.rotation, iovp.omega, np.diag(variances))


def build_component_trajectories(demos, baseline_via, iovps, cfg, grid_times,
                                 n_components=5, seed=0, ref_size=200,
                                 delta_t_via=1e-3, gmm_cache=None):
    """One regression run per via-point, each in its own tangent chart.

    Component 0 is the baseline: the run around the baseline via-point's
    rotation (or the first demonstration's start when baseline_via is None),
    adapted only towards that starting point.  Component k re-projects all
    demonstrations around the k-th via target and adapts towards it with the
    relaxed-axis covariance pattern.  Returns (components, aux_frames).
    """
    check_non_interference(iovps)
    lambda_a = cfg.lambda_a
    components = []
    aux_frames = []
    if baseline_via is not None:
        base_frame = baseline_via.rotation
        base_vias = [via_spec_from_iovp(baseline_via, lambda_a)]
    else:
        base_frame = demos[0].rotations[0]
        base_vias = []
    result = reproduce_with_via_points(
        demos, base_frame, base_vias, cfg, grid_times,
        n_components=n_components, seed=seed, ref_size=ref_size,
        delta_t_via=delta_t_via, gmm_cache=gmm_cache,
    )
    components.append(result.trajectory)
    aux_frames.append(base_frame)
    for iovp in iovps:
        frame = iovp.rotation
        result = reproduce_with_via_points(
            demos, frame, [via_spec_from_iovp(iovp, lambda_a)], cfg, grid_times,
            n_components=n_components, seed=seed, ref_size=ref_size,
            delta_t_via=delta_t_via, gmm_cache=gmm_cache,
        )
        components.append(result.trajectory)
        aux_frames.append(frame)
    return components, aux_frames


def fuse(components, curves, memory=True, d_th=D_TH_DEFAULT, e_psi=E_PSI_DEFAULT):
    """Blend K+1 component trajectories into one, preserving continuity.

    components[0] is the baseline; components[1:] pair with curves' centers.
    Per time step the K via components fold left-to-right through pairwise
    weighted averages with accumulated weights, and the result combines with
    the baseline under (sum W_k, W_0).  Every fold position owns a persistent
    memory state across the sweep; memory=False switches to the stateless
    average (diagnostic path that exhibits boundary discontinuities).
    """
    if not components:
        raise ValueError("need at least the baseline component")
    times = components[0].times
    for comp in components[1:]:
        if not np.array_equal(comp.times, times):
            raise ValueError("all components must share one time grid")
    n_via = len(components) - 1
    if curves.n_curves != n_via:
        raise ValueError("one weight curve per via component is required")
    weights = curves.weight_matrix(times)
    if n_via == 0:
        return FusedTrajectory(
            times.copy(), components[0].rotations.copy(),
            components[0].omega_world.copy(), weights,
        )
    q = times.shape[0]
    rotations = np.empty((q, 3, 3))
    stacks = [np.ascontiguousarray(c.rotations) for c in components]
    # fold positions: (n_via - 1) chain folds plus the final baseline fold
    n_folds = n_via
    # Fold histories start empty: the first step's traverse direction is its
    # own alignment reference, which matches seeding with the initial
    # direction of each fold pair.
    turn_counts = np.zeros(n_folds, dtype=np.int64)
    histories = np.zeros((n_folds, HISTORY_CAPACITY, 3))
    hist_lens = np.zeros(n_folds, dtype=np.int64)
    for i in range(q):
        cur = stacks[1][i]
        acc_w = weights[i, 1]
        for k in range(2, n_via + 1):
            wj = weights[i, k]
            if memory:
                cur, turn_counts[k - 2], hist_lens[k - 2] = memory_average_step(
                    cur, stacks[k][i], acc_w, wj,
                    turn_counts[k - 2], histories[k - 2], hist_lens[k - 2],
                    d_th, e_psi,
                )
            else:
                cur = stateless_average(cur, stacks[k][i], acc_w, wj)
            acc_w += wj
        w0 = weights[i, 0]
        if memory:
            cur, turn_counts[-1], hist_lens[-1] = memory_average_step(
                cur, stacks[0][i], acc_w, w0,
                turn_counts[-1], histories[-1], hist_lens[-1],
                d_th, e_psi,
            )
        else:
            cur = stateless_average(cur, stacks[0][i], acc_w, w0)
        rotations[i] = cur
    dt = float(times[1] - times[0])
    omega = angular_velocities(rotations, dt)
    return FusedTrajectory(times.copy(), rotations, omega, weights)


def acceleration_cost(omega_world, dt):
    """Mean squared angular acceleration, (1/N) sum ||omega_dot(t_n)||^2."""
    omega = np.asarray(omega_world, dtype=float)
    if omega.shape[0] < 3:
        raise SeriesTooShort("need at least 3 samples for the acceleration cost")
    omega_dot = so3.finite_difference_velocity(omega, dt)
    return float(np.mean(np.sum(omega_dot**2, axis=1)))


def trajectory_acceleration_cost(traj):
    dt = float(traj.times[1] - traj.times[0])
    return acceleration_cost(traj.omega_world, dt)


def axis_alignment_error(R, R_target, axis):
    """Angle between the two frames' images of a coordinate axis (radians)."""
    idx = _AXIS_INDEX[axis]
    a = np.asarray(R, dtype=float)[:, idx]
    b = np.asarray(R_target, dtype=float)[:, idx]
    return float(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))


def continuity_stats(rotations):
    """(max step, median step) of consecutive geodesic distances."""
    Rs = np.ascontiguousarray(np.asarray(rotations, dtype=float))
    if Rs.shape[0] < 2:
        raise SeriesTooShort("need at least 2 rotations")
    steps = consecutive_geodesic_steps(Rs)
    return float(steps.max()), float(np.median(steps))

"""Hot numeric kernels for SO(3) maps and the memory-based rotation average.

Every function here is written in plain numpy/math and compiled with numba's
``@njit`` when available.  Setting the environment variable ``ORIFUSE_NO_NUMBA=1``
(before import) selects the interpreted pure-numpy path instead; the bodies are
identical, so both paths produce the same results.  The compiled dispatchers
keep the original function on ``.py_func``, which is what the benchmark in
``benchmarks/bench_kernels.py`` compares against.
"""

import math
import os

import numpy as np

NUMBA_ENV_FLAG = "ORIFUSE_NO_NUMBA"

# distances below this are treated as zero when normalizing traverse directions
ZERO_DISTANCE = 1e-12


def _numba_requested() -> bool:
    return os.environ.get(NUMBA_ENV_FLAG, "").strip().lower() not in ("1", "true", "yes")


USING_NUMBA = False
if _numba_requested():
    try:
        from numba import njit as _njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False

if USING_NUMBA:

    def jit(fn):
        return _njit(cache=True)(fn)

else:

    def jit(fn):
        return fn


@jit
def rot_exp(psi):
    """Rodrigues map: 3-vector (axis * angle) -> rotation matrix.

    Total on R^3; a 2nd-order series replaces sin(t)/t and (1-cos(t))/t^2
    below t = 1e-8 to avoid 0/0.
    """
    x, y, z = psi[0], psi[1], psi[2]
    t2 = x * x + y * y + z * z
    t = math.sqrt(t2)
    if t < 1e-8:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t2
    # I + a*hat(psi) + b*(psi psi^T - t^2 I)
    R = np.empty((3, 3))
    R[0, 0] = 1.0 + b * (x * x - t2)
    R[0, 1] = -a * z + b * x * y
    R[0, 2] = a * y + b * x * z
    R[1, 0] = a * z + b * x * y
    R[1, 1] = 1.0 + b * (y * y - t2)
    R[1, 2] = -a * x + b * y * z
    R[2, 0] = -a * y + b * x * z
    R[2, 1] = a * x + b * y * z
    R[2, 2] = 1.0 + b * (z * z - t2)
    return R


@jit
def rot_log(R):
    """Inverse of rot_exp with range inside the closed pi-ball.

    Assumes R is a valid rotation (validation happens at the API layer).
    Output on the boundary obeys the positive-half-sphere convention:
    never (x < 0) nor (x = 0, y < 0) nor (x = y = 0, z < 0).
    """
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    c = (tr - 1.0) / 2.0
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    # vee(R - R^T) / 2 = sin(theta) * axis
    sx = 0.5 * (R[2, 1] - R[1, 2])
    sy = 0.5 * (R[0, 2] - R[2, 0])
    sz = 0.5 * (R[1, 0] - R[0, 1])
    sn = math.sqrt(sx * sx + sy * sy + sz * sz)
    # atan2 keeps the angle well conditioned where arccos degenerates (near pi)
    theta = math.atan2(sn, c)
    out = np.empty(3)
    if theta < 1e-8:
        # theta/sin(theta) = 1 to machine precision here
        out[0] = sx
        out[1] = sy
        out[2] = sz
        return out
    if tr < -1.0 + 1e-7:
        # Near pi the skew part degenerates; recover the axis from the
        # symmetric part, axis_i^2 = (R_ii - c) / (1 - c), using the largest
        # diagonal entry for the anchor component.
        one_c = 1.0 - c
        d0 = (R[0, 0] - c) / one_c
        d1 = (R[1, 1] - c) / one_c
        d2 = (R[2, 2] - c) / one_c
        if d0 >= d1 and d0 >= d2:
            a0 = math.sqrt(d0 if d0 > 0.0 else 0.0)
            a1 = (R[0, 1] + R[1, 0]) / (2.0 * one_c * a0)
            a2 = (R[0, 2] + R[2, 0]) / (2.0 * one_c * a0)
        elif d1 >= d0 and d1 >= d2:
            a1 = math.sqrt(d1 if d1 > 0.0 else 0.0)
            a0 = (R[0, 1] + R[1, 0]) / (2.0 * one_c * a1)
            a2 = (R[1, 2] + R[2, 1]) / (2.0 * one_c * a1)
        else:
            a2 = math.sqrt(d2 if d2 > 0.0 else 0.0)
            a0 = (R[0, 2] + R[2, 0]) / (2.0 * one_c * a2)
            a1 = (R[1, 2] + R[2, 1]) / (2.0 * one_c * a2)
        n = math.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
        a0 /= n
        a1 /= n
        a2 /= n
        dot = sx * a0 + sy * a1 + sz * a2  # = sin(theta) when aligned
        if dot < -1e-12:
            a0 = -a0
            a1 = -a1
            a2 = -a2
        elif dot <= 1e-12:
            # angle is pi within noise: sign fixed by the half-sphere rule,
            # with z >= 0 breaking the exact pole tie
            if a0 < 0.0 or (a0 == 0.0 and a1 < 0.0) or (a0 == 0.0 and a1 == 0.0 and a2 < 0.0):
                a0 = -a0
                a1 = -a1
                a2 = -a2
        out[0] = theta * a0
        out[1] = theta * a1
        out[2] = theta * a2
        return out
    s = theta / sn
    out[0] = s * sx
    out[1] = s * sy
    out[2] = s * sz
    return out


@jit
def rot_geodesic(Ri, Rj):
    """Geodesic distance ||log(Ri^T Rj)|| in [0, pi]."""
    rel = Ri.T @ Rj
    psi = rot_log(rel)
    return math.sqrt(psi[0] * psi[0] + psi[1] * psi[1] + psi[2] * psi[2])


@jit
def rot_exp_many(psis):
    n = psis.shape[0]
    out = np.empty((n, 3, 3))
    for i in range(n):
        out[i] = rot_exp(psis[i])
    return out


@jit
def rot_log_many(Rs):
    n = Rs.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        out[i] = rot_log(Rs[i])
    return out


@jit
def consecutive_geodesic_steps(Rs):
    """Distances between consecutive rotations of a trajectory."""
    n = Rs.shape[0]
    out = np.empty(n - 1)
    for i in range(n - 1):
        out[i] = rot_geodesic(Rs[i], Rs[i + 1])
    return out


@jit
def stateless_average(Ri, Rj, Wi, Wj):
    """Weighted average along the geodesic: Ri * exp(d * psi_bar).

    d = Wj / (Wi + Wj) * dist(Ri, Rj); returns Ri for coincident inputs
    or when both weights vanish.
    """
    rel = Ri.T @ Rj
    psi = rot_log(rel)
    d_ij = math.sqrt(psi[0] * psi[0] + psi[1] * psi[1] + psi[2] * psi[2])
    wsum = Wi + Wj
    if d_ij < ZERO_DISTANCE or wsum <= 0.0:
        return Ri.copy()
    d = Wj / wsum * d_ij
    step = np.empty(3)
    scale = d / d_ij
    step[0] = scale * psi[0]
    step[1] = scale * psi[1]
    step[2] = scale * psi[2]
    return Ri @ rot_exp(step)


@jit
def _history_mean(hist, n_hist):
    """Average of the stored non-zero traverse directions, re-normalized.

    Zero-sentinel rows are skipped; a cancelling mean falls back to the most
    recent non-zero entry, and an all-zero history yields the zero vector.
    """
    m0 = 0.0
    m1 = 0.0
    m2 = 0.0
    count = 0
    for i in range(n_hist):
        h0 = hist[i, 0]
        h1 = hist[i, 1]
        h2 = hist[i, 2]
        if h0 * h0 + h1 * h1 + h2 * h2 > 0.25:  # unit vectors vs zero sentinel
            m0 += h0
            m1 += h1
            m2 += h2
            count += 1
    out = np.zeros(3)
    if count == 0:
        return out
    n = math.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
    if n < 1e-12:
        for i in range(n_hist - 1, -1, -1):
            h0 = hist[i, 0]
            h1 = hist[i, 1]
            h2 = hist[i, 2]
            if h0 * h0 + h1 * h1 + h2 * h2 > 0.25:
                out[0] = h0
                out[1] = h1
                out[2] = h2
                return out
        return out
    out[0] = m0 / n
    out[1] = m1 / n
    out[2] = m2 / n
    return out


@jit
def memory_average_step(Ri, Rj, Wi, Wj, n_turns, hist, n_hist, d_th, e_psi):
    """One step of the memory-based weighted rotation average.

    Mutates ``hist`` in place (bounded FIFO of past traverse directions) and
    returns ``(Rij, n_turns, n_hist)``.  Dispatch:

    even turn count: d = Wj*(N*pi + d_ij)/(Wi+Wj), result Ri*exp(+d*psi_c);
    odd turn count:  d = Wj*((N+1)*pi - d_ij)/(Wi+Wj), result Ri*exp(-d*psi_c).

    A direction flip (dot with the history average below -e_psi) increments or
    decrements the turn counter depending on whether the crossing happened at
    the pi boundary (d_ij > d_th) or at the pole, switches to the other
    branch's formula, and clears the history.  A direction that is neither
    aligned nor anti-aligned is an outlier; the history average is used in
    its place.
    """
    rel = Ri.T @ Rj
    psi = rot_log(rel)
    d_ij = math.sqrt(psi[0] * psi[0] + psi[1] * psi[1] + psi[2] * psi[2])
    psi_c = np.zeros(3)
    if d_ij >= ZERO_DISTANCE:
        psi_c[0] = psi[0] / d_ij
        psi_c[1] = psi[1] / d_ij
        psi_c[2] = psi[2] / d_ij
    if n_hist == 0:
        psi_p = psi_c.copy()
    else:
        psi_p = _history_mean(hist, n_hist)
    wsum = Wi + Wj
    if wsum <= 0.0:
        Rij = Ri.copy()
    else:
        dot = psi_p[0] * psi_c[0] + psi_p[1] * psi_c[1] + psi_p[2] * psi_c[2]
        even = n_turns % 2 == 0
        if dot > e_psi:
            if even:
                d = Wj * (n_turns * math.pi + d_ij) / wsum
                Rij = Ri @ rot_exp(d * psi_c)
            else:
                d = Wj * ((n_turns + 1) * math.pi - d_ij) / wsum
                Rij = Ri @ rot_exp(-d * psi_c)
        elif -dot > e_psi:
            # flip detected
            if even:
                if d_ij > d_th:
                    n_turns += 1  # crossed the pi boundary forwards
                else:
                    n_turns -= 1  # crossed the pole backwards
                d = Wj * ((n_turns + 1) * math.pi - d_ij) / wsum
                Rij = Ri @ rot_exp(-d * psi_c)
            else:
                if d_ij > d_th:
                    n_turns -= 1
                else:
                    n_turns += 1
                d = Wj * (n_turns * math.pi + d_ij) / wsum
                Rij = Ri @ rot_exp(d * psi_c)
            n_hist = 0  # historical data is stale after a flip
        else:
            # outlier direction: trust the history instead
            if even:
                d = Wj * (n_turns * math.pi + d_ij) / wsum
                Rij = Ri @ rot_exp(d * psi_p)
            else:
                d = Wj * ((n_turns + 1) * math.pi - d_ij) / wsum
                Rij = Ri @ rot_exp(-d * psi_p)
    cap = hist.shape[0]
    if n_hist < cap:
        hist[n_hist] = psi_c
        n_hist += 1
    else:
        for i in range(cap - 1):
            hist[i] = hist[i + 1]
        hist[cap - 1] = psi_c
    return Rij, n_turns, n_hist

"""Pairwise weighted rotation averaging with turn-counting memory.

The stateless average interpolates along the geodesic from Ri to Rj.  When the
pair is swept over time, that map is discontinuous wherever the relative
rotation crosses the pi boundary or the pole: the traverse direction returned
by the log flips sign.  The memory-based variant keeps an integer turn counter
and a short history of past traverse directions, detects flips, and unwraps
the traveled distance to N*pi + d so the averaged output stays continuous.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import so3
from ._kernels import ZERO_DISTANCE, memory_average_step, rot_log, stateless_average

D_TH_DEFAULT = 0.15  # radians; splits pi-boundary from pole crossings
E_PSI_DEFAULT = math.cos(50.0 * math.pi / 180.0)
HISTORY_CAPACITY = 5


@dataclass(frozen=True)
class WeightedPair:
    Ri: np.ndarray
    Rj: np.ndarray
    Wi: float
    Wj: float

    def __post_init__(self):
        if self.Wi < 0 or self.Wj < 0 or self.Wi + self.Wj <= 0:
            raise ValueError("weights must be non-negative with a positive sum")


@dataclass
class FusionState:
    """Memory of one fold position in a sequential fusion run.

    history holds up to ``capacity`` past unit traverse directions (zero rows
    are sentinels for coincident inputs); n_turns counts signed crossings of
    multiples of pi.
    """

    n_turns: int
    history: np.ndarray  # (capacity, 3)
    n_hist: int
    psi_default: np.ndarray
    d_th: float = D_TH_DEFAULT
    e_psi: float = E_PSI_DEFAULT

    def copy(self):
        return FusionState(
            self.n_turns, self.history.copy(), self.n_hist,
            self.psi_default.copy(), self.d_th, self.e_psi,
        )


def init_fusion_state(Ri0, Rj0, d_th=D_TH_DEFAULT, e_psi=E_PSI_DEFAULT,
                      capacity=HISTORY_CAPACITY):
    """State for a fresh sweep starting from the pair (Ri0, Rj0).

    The initial traverse direction seeds the history so the first update has
    an alignment reference; coincident rotations store the zero sentinel.
    """
    if not 0.0 < d_th < math.pi:
        raise ValueError("d_th must lie in (0, pi)")
    if not -1.0 < e_psi < 1.0:
        raise ValueError("e_psi must lie in (-1, 1)")
    Ri0 = so3.check_rotation(Ri0, name="Ri0")
    Rj0 = so3.check_rotation(Rj0, name="Rj0")
    psi = rot_log(np.ascontiguousarray(Ri0.T @ Rj0))
    d = float(np.linalg.norm(psi))
    history = np.zeros((capacity, 3))
    if d < ZERO_DISTANCE:
        psi_default = np.zeros(3)
        n_hist = 0
    else:
        psi_default = psi / d
        history[0] = psi_default
        n_hist = 1
    return FusionState(0, history, n_hist, psi_default, d_th, e_psi)


def weighted_average_stateless(pair):
    """Ri * exp(d * psi_bar) with d = Wj/(Wi+Wj) * dist(Ri, Rj)."""
    Ri = so3.check_rotation(pair.Ri, name="Ri")
    Rj = so3.check_rotation(pair.Rj, name="Rj")
    return stateless_average(
        np.ascontiguousarray(Ri), np.ascontiguousarray(Rj), float(pair.Wi), float(pair.Wj)
    )


def weighted_average_memory(pair, state):
    """One memory-based averaging step; returns (Rij, next_state).

    The input state is not mutated.  Sampling contract: between consecutive
    calls the relative motion of Rj with respect to Ri must stay below
    min(d_th, pi - d_th), otherwise a crossing can be misclassified.
    """
    Ri = so3.check_rotation(pair.Ri, name="Ri")
    Rj = so3.check_rotation(pair.Rj, name="Rj")
    next_state = state.copy()
    Rij, n_turns, n_hist = memory_average_step(
        np.ascontiguousarray(Ri),
        np.ascontiguousarray(Rj),
        float(pair.Wi),
        float(pair.Wj),
        next_state.n_turns,
        next_state.history,
        next_state.n_hist,
        next_state.d_th,
        next_state.e_psi,
    )
    next_state.n_turns = int(n_turns)
    next_state.n_hist = int(n_hist)
    return Rij, next_state

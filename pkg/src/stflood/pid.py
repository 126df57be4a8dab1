"""PI baseline mapping a reliability error onto a discrete retransmission count."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from stflood.core import N_MAX, ValidationError


@dataclass(frozen=True)
class PiState:
    kp: float = 1.0
    ki: float = 0.25
    integral: float = 0.0
    hold_counter: int = 0
    n_current: int = 3
    n_base: int = 3
    n_max: int = N_MAX
    i_max: float = 4.0
    hold_rounds: int = 3
    leak: float = 0.8


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def pid_step(state: PiState, reliability: float) -> tuple[int, PiState]:
    """One control update.

    Increases take effect at once; decreases are limited to one step per
    round and only after ``hold_rounds`` consecutive loss-free rounds.
    """
    if not 0.0 <= reliability <= 1.0:
        raise ValidationError(f"reliability must be in [0, 1], got {reliability}")
    error = 1.0 - reliability
    integral = min(max(state.integral + error, 0.0), state.i_max)
    if error == 0.0:
        integral *= state.leak
        hold = state.hold_counter + 1
    else:
        hold = 0
    u = state.kp * error + state.ki * integral
    n_raw = min(max(state.n_base + _round_half_away(u * state.n_max), 1), state.n_max)
    n = state.n_current
    if n_raw > n:
        n = n_raw
    elif n_raw < n and hold >= state.hold_rounds:
        n -= 1
    return n, replace(state, integral=integral, hold_counter=hold, n_current=n)

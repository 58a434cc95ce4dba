"""Step loop shared by the Euler-type integrators."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ..randomness import NoiseTape

SQRT_HALF = math.sqrt(0.5)


def as_segments(tape: NoiseTape | Sequence[NoiseTape]) -> list[NoiseTape]:
    segs = [tape] if isinstance(tape, NoiseTape) else list(tape)
    for a, b in zip(segs, segs[1:]):
        if abs(a.time_grid()[-1] - b.time_grid()[0]) > 1e-9:
            raise ValueError("tape segments must be contiguous in time")
    return segs


def horizon_of(segs: Sequence[NoiseTape]) -> float:
    return float(segs[-1].time_grid()[-1])


def check_horizon(segs: Sequence[NoiseTape], horizon: float | None, dt: float | None = None) -> float:
    end = horizon_of(segs)
    start = float(segs[0].time_grid()[0])
    if horizon is not None and abs(end - start - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"tape covers [{start}, {end}] but horizon {horizon} was requested")
    if dt is not None and len(segs) == 1 and segs[0].times is None and abs(segs[0].dt - dt) > 1e-12 * dt:
        raise ValueError(f"tape step {segs[0].dt} does not match dt={dt}")
    return end - start


def steps_for(horizon: float, dt: float) -> tuple[int, float]:
    """Number of steps covering ``horizon`` and the exact step that divides it."""
    if not (horizon > 0 and dt > 0):
        raise ValueError("horizon and dt must be positive")
    steps = max(1, int(round(horizon / dt)))
    return steps, horizon / steps


def march(tape, channels: Sequence[str], state, step: Callable, on_step: Callable | None = None):
    """Run ``state = step(state, t, h, *increments)`` across the tape (or segments).

    Increments are passed in ``channels`` order with shape ``batch_shape``.
    ``on_step(k, t_next, state)`` is called after each step with the global
    step count ``k``.
    """
    k = 0
    for seg in as_segments(tape):
        grid = seg.time_grid()
        for k0, k1, blk in seg.iter_blocks(channels):
            cols = [blk[c] for c in channels]
            for j in range(k1 - k0):
                i = k0 + j
                t = grid[i]
                h = grid[i + 1] - t
                state = step(state, t, h, *[c[j] for c in cols])
                k += 1
                if on_step is not None:
                    on_step(k, grid[i + 1], state)
    return state


class Recorder:
    """Keeps a copy of the state every ``every`` steps (plus the initial state)."""

    def __init__(self, every: int, initial, extract=lambda s: s):
        self.every = max(1, int(every))
        self.extract = extract
        self.times = [0.0]
        self.values = [np.array(extract(initial), copy=True)]

    def __call__(self, k, t, state):
        if k % self.every == 0:
            self.times.append(float(t))
            self.values.append(np.array(self.extract(state), copy=True))

    def result(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.times), np.stack(self.values, axis=-1)


def expand(inc: np.ndarray, ndim: int) -> np.ndarray:
    """Append singleton axes so a (batch,) increment broadcasts over a lambda axis."""
    return inc.reshape(inc.shape + (1,) * (ndim - inc.ndim))

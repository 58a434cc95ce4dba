"""Relative phase alpha^lambda = phi^lambda - phi^0 and the Sine_beta SDE.

critical:   dalpha = lam dt + Re[(e^{-i alpha} - 1) dZ],  dZ = (dB2 + i dB3)/sqrt(2)
decaying:   dalpha = lam dt + sigma_rho/sqrt(1-t) Re[(e^{-i alpha} - 1) dZ]
sine-beta:  dalpha = lam (beta/4) e^{-beta t/4} dt + Re[(e^{-i alpha} - 1)(dB1 + i dB2)]

The fixed-lambda diffusion coefficients are sqrt(2) sin(alpha/2) for the
first two and 2 sin(alpha/2) for sine-beta.  Substituting
t = 1 - e^{-beta s/4} in the decaying equation gives the sine-beta equation
exactly when beta = 8/sigma_rho^2 under these noise normalizations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..randomness import NoiseTape, warp_tape
from ._march import SQRT_HALF, Recorder, as_segments, check_horizon, expand, march

TWO_PI = 2.0 * math.pi


class RelativeKind(str, enum.Enum):
    CRITICAL = "critical"
    DECAYING = "decaying"
    SINE_BETA = "sine-beta"


@dataclass(frozen=True)
class RelativePhasePath:
    kind: RelativeKind
    lambda_grid: np.ndarray
    final: np.ndarray
    beta: float | None = None
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    def counts(self) -> np.ndarray:
        return np.rint(self.final / TWO_PI).astype(np.int64)

    def rounding_residual(self) -> np.ndarray:
        return np.abs(self.final / TWO_PI - np.rint(self.final / TWO_PI))


def sine_beta_tmax(beta: float, lam: float, buffer: float = 20.0) -> float:
    """Truncation time (4/beta) log(beta lam/4) + buffer (log term floored at 0)."""
    return 4.0 / beta * max(0.0, math.log(max(beta * lam / 4.0, 1e-300))) + buffer


def decaying_sigma_rho(beta: float) -> float:
    """sigma*rho for which the time-changed decaying equation is the sine-beta equation."""
    return math.sqrt(8.0 / beta)


def time_change(beta: float):
    return lambda s: 1.0 - np.exp(-beta * np.asarray(s) / 4.0)


def integrate_relative_family(kind: RelativeKind | str, lambda_grid, tape, dt: float | None = None,
                              horizon: float | None = None, *, beta: float | None = None,
                              sigma_rho: float = 1.0, record_every: int | None = None) -> RelativePhasePath:
    kind = RelativeKind(kind)
    segs = as_segments(tape)
    check_horizon(segs, horizon, dt)
    lam = np.asarray(lambda_grid, dtype=float)
    bs = segs[0].batch_shape
    shape = bs + lam.shape if lam.ndim == 1 else lam.shape
    nd = len(shape)
    alpha = np.zeros(shape)

    if kind is RelativeKind.SINE_BETA:
        if beta is None or not beta > 0:
            raise ValueError("sine-beta kind needs beta > 0")
        channels = ("B1", "B2")
        q = beta / 4.0

        def step(a, t, h, dB1, dB2):
            c = np.cos(a)
            s = np.sin(a)
            a += lam * (q * math.exp(-q * t) * h) + (c - 1.0) * expand(dB1, nd) + s * expand(dB2, nd)
            return a
    else:
        decaying = kind is RelativeKind.DECAYING
        if decaying and float(segs[-1].time_grid()[-1]) >= 1.0:
            raise ValueError("decaying kind integrates on [0, 1 - delta] only")
        channels = ("B2", "B3")

        def step(a, t, h, dB2, dB3):
            g = SQRT_HALF * (sigma_rho / math.sqrt(1.0 - t) if decaying else 1.0)
            c = np.cos(a)
            s = np.sin(a)
            a += lam * h + g * ((c - 1.0) * expand(dB2, nd) + s * expand(dB3, nd))
            return a

    rec = Recorder(record_every, alpha) if record_every else None
    alpha = march(segs, channels, alpha, step, rec)
    times = values = None
    if rec is not None:
        times, values = rec.result()
    return RelativePhasePath(kind=kind, lambda_grid=lam, final=alpha, beta=beta, times=times, values=values)


def warp_to_decaying(sine_tape: NoiseTape, beta: float) -> NoiseTape:
    """Decaying-kind tape on t = 1 - e^{-beta s/4} carrying the sine-beta noise.

    Sine-beta channels B1, B2 become B2, B3, rescaled to standard increments
    on the warped grid.
    """
    return warp_tape(sine_tape, time_change(beta), {"B2": "B1", "B3": "B2"})


def sine_beta_segments(base: NoiseTape, lam_max: float, beta: float, max_rotation: float = 0.02,
                       max_level: int = 12) -> list[NoiseTape]:
    """Split a coarse tape into contiguous pieces refined (Brownian bridge) so that
    the drift rotation per step, lam_max (beta/4) e^{-beta t/4} h, stays below ``max_rotation``.
    """
    grid = base.time_grid()
    rate = lam_max * beta / 4.0 * np.exp(-beta * grid[:-1] / 4.0)
    need = np.ceil(np.log2(np.maximum(rate * base.dt / max_rotation, 1.0)))
    levels = np.clip(need, 0, max_level).astype(int)
    segs = []
    start = 0
    for k in range(1, base.steps + 1):
        if k == base.steps or levels[k] != levels[start]:
            seg = base.slice_steps(start, k)
            for _ in range(levels[start]):
                seg = seg.refine()
            segs.append(seg)
            start = k
    return segs

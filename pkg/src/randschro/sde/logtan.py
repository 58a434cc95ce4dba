"""The log-tan process Y = log(tan(alpha/4)) of the relative phase at small lambda.

    dY = (eps/tau)/2 cosh(Y) dt + tanh(Y)/4 dt + dB/sqrt(2)

Explosion of Y to +infinity on [0, tau] is the event alpha^{eps/tau}(tau) >= 2 pi.
The cosh term makes explicit Euler unstable from deeply negative starting
values, so the default scheme splits each step: the cosh flow is solved
exactly through the Gudermannian gd(Y) = arctan(sinh Y), which moves at the
constant speed (eps/tau)/2 and explodes when it reaches pi/2; the tanh drift
and the noise are then applied by an Euler-Maruyama step.  The flow is
evaluated as gd(Y) + pi/2 = 2 arctan(e^Y), which keeps full relative
precision for very negative Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._march import SQRT_HALF, as_segments, check_horizon, march


@dataclass(frozen=True)
class LogTanResult:
    Y: np.ndarray
    exploded: np.ndarray
    explosion_step: np.ndarray  # -1 when no explosion


def integrate_logtan(epsilon: float, tau: float, tape, dt: float | None = None, Y0=-30.0,
                     cap: float = 50.0, scheme: str = "split") -> LogTanResult:
    if scheme not in ("split", "euler"):
        raise ValueError("scheme must be 'split' or 'euler'")
    segs = as_segments(tape)
    check_horizon(segs, tau, dt)
    a = 0.5 * epsilon / tau
    bs = segs[0].batch_shape
    Y = np.broadcast_to(np.asarray(Y0, dtype=float), np.broadcast_shapes(bs, np.shape(Y0))).copy()
    st = {"Y": Y, "dead": np.zeros(Y.shape, bool), "at": np.full(Y.shape, -1, np.int64), "k": 0}

    def step(st, t, h, dB):
        Y, dead = st["Y"], st["dead"]
        st["k"] += 1
        if scheme == "split":
            g = 2.0 * np.arctan(np.exp(np.minimum(Y, 700.0))) + a * h
            boom = g >= math.pi
            Yc = np.log(np.tan(0.5 * np.minimum(g, math.pi * (1 - 1e-16))))
        else:
            Yc = Y + a * np.cosh(np.minimum(Y, 700.0)) * h
            boom = np.zeros(Y.shape, bool)
        Yn = Yc + 0.25 * np.tanh(Yc) * h + SQRT_HALF * dB
        boom |= ~np.isfinite(Yn) | (Yn > cap)
        new = boom & ~dead
        st["at"] = np.where(new, st["k"], st["at"])
        st["dead"] = dead | boom
        st["Y"] = np.where(st["dead"], np.where(dead, Y, cap), Yn)
        return st

    st = march(segs, ("B",), st, step)
    return LogTanResult(Y=st["Y"], exploded=st["dead"], explosion_step=st["at"])

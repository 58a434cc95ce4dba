"""Brownian carousel in the Poincaré disk.

    dV = (1 - |V|^2)/2 dY,            dY = (dB2 + i dB3)/sqrt(2)
    d gamma/dt = lam |e^{i gamma} - V|^2 / (1 - |V|^2)
    q = log((1 + |V|)/(1 - |V|))      (hyperbolic distance to the origin)

Optionally the radial equation dq = dB_r/sqrt(2) + coth(q)/4 dt is integrated
alongside, with dB_r = sqrt(2) Re(conj(V) dY)/|V| taken from the same tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._march import SQRT_HALF, Recorder, as_segments, check_horizon, expand, march

EDGE = 1.0 - 1e-8


class CarouselError(FloatingPointError):
    pass


@dataclass(frozen=True)
class CarouselState:
    V: np.ndarray
    gamma: np.ndarray  # batch + (L,)
    q: np.ndarray
    q_direct: np.ndarray | None = None
    times: np.ndarray | None = None
    path: np.ndarray | None = None  # columns Re V, Im V, gamma[0]

    def to_csv(self, fh_or_path, path_index: int = 0) -> None:
        if self.path is None:
            raise ValueError("carousel was integrated without recording")
        p = self.path if self.path.ndim == 2 else self.path[path_index]
        np.savetxt(fh_or_path, np.column_stack([self.times, p.T]), delimiter=",",
                   header="t,Re V,Im V,gamma", comments="", fmt="%.10g")


def hyperbolic_radius(V: np.ndarray) -> np.ndarray:
    r = np.abs(V)
    return np.log1p(r) - np.log1p(-r)


def integrate_carousel(lambda_grid, tau: float | None, tape, dt: float | None = None, V0: complex = 0.0,
                       radial: bool = False, record_every: int | None = None) -> CarouselState:
    segs = as_segments(tape)
    check_horizon(segs, tau, dt)
    lam = np.asarray(lambda_grid, dtype=float)
    bs = segs[0].batch_shape
    shape = bs + lam.shape if lam.ndim == 1 else lam.shape
    nd = len(shape)
    V = np.full(bs, complex(V0))
    if radial and abs(V0) == 0:
        raise ValueError("the radial equation is singular at the origin; start from V0 != 0")
    st = {"V": V, "g": np.zeros(shape), "q": hyperbolic_radius(V) if radial else None, "k": 0}

    def step(st, t, h, dB2, dB3):
        V = st["V"]
        st["k"] += 1
        vr, vi = V.real, V.imag
        r2 = vr * vr + vi * vi
        one = 1.0 - r2
        g = st["g"]
        Vx = expand(vr, nd)
        Vy = expand(vi, nd)
        dx = np.cos(g) - Vx
        dy = np.sin(g) - Vy
        st["g"] = g + lam * (h * (dx * dx + dy * dy) / expand(one, nd))
        dYr = SQRT_HALF * dB2
        dYi = SQRT_HALF * dB3
        if st["q"] is not None:
            r = np.sqrt(r2)
            dBr = math.sqrt(2.0) * (vr * dYr + vi * dYi) / r
            q = st["q"]
            st["q"] = q + SQRT_HALF * dBr + 0.25 * h / np.tanh(q)
        Vn = V + 0.5 * one * (dYr + 1j * dYi)
        if np.any(np.abs(Vn) >= EDGE):
            raise CarouselError(f"|V| reached the boundary at step {st['k']} (dt={h:.3g}); reduce dt")
        st["V"] = Vn
        return st

    rec = None
    if record_every:
        rec = Recorder(record_every, st, lambda s: np.stack(
            np.broadcast_arrays(s["V"].real, s["V"].imag, s["g"][..., 0]), axis=-1))
    st = march(segs, ("B2", "B3"), st, step, rec)
    times = path = None
    if rec is not None:
        times, path = rec.result()
    return CarouselState(V=st["V"], gamma=st["g"], q=hyperbolic_radius(st["V"]), q_direct=st["q"],
                         times=times, path=path)


def boundary_exit(V: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Exit angle in [0, 2 pi) of hyperbolic BM from V, given uniform angles u.

    The Möbius map w -> (w + V)/(1 + conj(V) w) sends the uniform law on the
    circle (harmonic measure from 0) to the Poisson kernel at V.
    """
    w = np.exp(1j * np.asarray(u))
    x = (w + V) / (1.0 + np.conj(V) * w)
    return np.mod(np.angle(x), 2.0 * math.pi)

"""Linear 2x2 complex matrix SDEs for the regularized transfer matrices.

generic:  dX = 1/2 [[i lam dt + i dB, dW], [conj(dW), -i lam dt - i dB]] X
E0:       dX = 1/2 [[i lam dt + i dB1, i dB2], [-i dB2, -i lam dt - i dB1]] X
decaying: as generic with the noise multiplied by sigma_rho/sqrt(1 - t)

Starting from X(0) = Zinv and real lambda, the continuum phase is read off
the first column: e^{i phi} = -X11 / conj(X11) (phi(0) = 0).  By Itô's
formula this phi solves the critical phase SDE driven by i dW rather than dW
(equal in law), so pathwise comparisons must rotate the complex noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..transfer import diagonalization, lift
from ._march import SQRT_HALF, Recorder, as_segments, check_horizon, march


class MatrixKind(str, enum.Enum):
    GENERIC = "generic"
    E0 = "E0"
    DECAYING = "decaying"


@dataclass(frozen=True)
class MatrixPath:
    kind: MatrixKind
    lam: complex
    init: np.ndarray
    X: np.ndarray  # batch + (2, 2) at the final time
    times: np.ndarray | None = None
    path: np.ndarray | None = None  # batch + (2, 2, n_records)

    def det_drift(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.X) - np.linalg.det(self.init))

    def im_cross(self) -> np.ndarray:
        """Im(X11 conj(X12)), conserved (= rho/4) from X(0) = Zinv at real lambda."""
        return (self.X[..., 0, 0] * np.conj(self.X[..., 0, 1])).imag


def initial_matrix(init: str | np.ndarray, E: float = 1.0) -> np.ndarray:
    if isinstance(init, np.ndarray):
        return init.astype(complex)
    if init == "identity":
        return np.eye(2, dtype=complex)
    if init == "Zinv":
        return diagonalization(E).Zinv
    raise ValueError("init must be 'identity', 'Zinv' or an explicit matrix")


def integrate_matrix(kind: MatrixKind | str, lam: complex, init, horizon: float | None, tape,
                     dt: float | None = None, *, E: float = 1.0, sigma_rho: float = 1.0,
                     record_every: int | None = None) -> MatrixPath:
    kind = MatrixKind(kind)
    segs = as_segments(tape)
    check_horizon(segs, horizon, dt)
    X0 = initial_matrix(init, 0.0 if kind is MatrixKind.E0 and isinstance(init, str) else E)
    bs = segs[0].batch_shape
    X = np.broadcast_to(X0, bs + (2, 2)).astype(complex).copy()
    il = 0.5j * lam
    if kind is MatrixKind.DECAYING and float(segs[-1].time_grid()[-1]) >= 1.0:
        raise ValueError("decaying kind needs a horizon below 1")

    def apply(X, a11, a12, a21, a22):
        x11, x12, x21, x22 = X[..., 0, 0], X[..., 0, 1], X[..., 1, 0], X[..., 1, 1]
        n11 = x11 + a11 * x11 + a12 * x21
        n12 = x12 + a11 * x12 + a12 * x22
        n21 = x21 + a21 * x11 + a22 * x21
        n22 = x22 + a21 * x12 + a22 * x22
        X[..., 0, 0], X[..., 0, 1], X[..., 1, 0], X[..., 1, 1] = n11, n12, n21, n22
        return X

    if kind is MatrixKind.E0:
        channels = ("B1", "B2")

        def step(X, t, h, dB1, dB2):
            d = il * h + 0.5j * dB1
            return apply(X, d, 0.5j * dB2, -0.5j * dB2, -d)
    else:
        channels = ("B", "B2", "B3")
        decaying = kind is MatrixKind.DECAYING

        def step(X, t, h, dB, dB2, dB3):
            g = sigma_rho / math.sqrt(1.0 - t) if decaying else 1.0
            dW = SQRT_HALF * (dB2 + 1j * dB3)
            d = il * h + 0.5j * g * dB
            off = 0.5 * g * dW
            return apply(X, d, off, np.conj(off), -d)

    rec = Recorder(record_every, X) if record_every else None
    X = march(segs, channels, X, step, rec)
    times = path = None
    if rec is not None:
        times, path = rec.result()
    return MatrixPath(kind=kind, lam=lam, init=X0, X=X, times=times, path=path)


def continuum_phase(X11: np.ndarray, axis: int = -1) -> np.ndarray:
    """Lifted phase along a recorded path from e^{i phi} = -X11/conj(X11)."""
    ang = np.angle(-X11 / np.conj(X11))
    return lift(ang, start=0.0, axis=axis)


def q_from_x(X: np.ndarray, E: float) -> np.ndarray:
    """Q = Z X Zinv (the regularized transfer matrix)."""
    dd = diagonalization(E)
    return dd.Z @ X @ dd.Zinv

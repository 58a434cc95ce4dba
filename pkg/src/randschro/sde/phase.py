"""Phase-function SDE families coupled across lambda through one tape.

critical:     dphi = lam dt + dB + Re[e^{-i phi} dW]
critical-E0:  dphi = lam dt + dB1 + cos(phi) dB2 + cos(2 phi)/4 dt      (e0_drift="stated")
              dphi = lam dt + dB1 - cos(phi) dB2 - sin(2 phi)/4 dt      (e0_drift="ito")
decaying:     dphi = lam dt + sigma_rho/sqrt(1-t) (dB + Re[e^{-i phi} dW])

with dW = (dB2 + i dB3)/sqrt(2).  The "ito" E0 variant is the phase equation
obtained by Itô's formula from the E0 matrix SDE; see ``matrix.py``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ..randomness import NoiseTape
from ._march import SQRT_HALF, Recorder, as_segments, check_horizon, expand, march


class PhaseKind(str, enum.Enum):
    CRITICAL = "critical"
    CRITICAL_E0 = "critical-E0"
    DECAYING = "decaying"


@dataclass(frozen=True)
class PhasePathFamily:
    kind: PhaseKind
    lambda_grid: np.ndarray
    dt: float
    horizon: float
    final: np.ndarray  # batch_shape + (L,)
    times: np.ndarray | None = None
    values: np.ndarray | None = None  # batch_shape + (L, n_records)
    tape: NoiseTape | None = None

    def monotone_violations(self, tol: float = 0.0) -> int:
        return int(np.sum(np.diff(self.final, axis=-1) < -tol))

    def to_csv(self, path, path_index: int = 0) -> None:
        if self.values is None:
            raise ValueError("family was integrated without recording")
        vals = self.values if self.values.ndim == 2 else self.values[path_index]
        lam = np.asarray(self.lambda_grid)
        if lam.ndim > 1:
            lam = lam[path_index]
        T, LL = np.meshgrid(self.times, lam, indexing="ij")
        rows = np.column_stack([T.ravel(), LL.ravel(), vals.T.ravel()])
        np.savetxt(path, rows, delimiter=",", header="t,lambda,phi", comments="", fmt="%.10g")


def _grid_shape(tape: NoiseTape, lam: np.ndarray) -> tuple[int, ...]:
    bs = tape.batch_shape
    if lam.ndim == 1:
        return bs + lam.shape
    if lam.shape[:-1] != bs:
        raise ValueError(f"per-path lambda grid {lam.shape} does not match tape batch {bs}")
    return lam.shape


def integrate_phase_family(kind: PhaseKind | str, lambda_grid, horizon: float | None, tape,
                           dt: float | None = None, *, sigma_rho: float = 1.0, e0_drift: str = "stated",
                           record_every: int | None = None) -> PhasePathFamily:
    """Euler-Maruyama for the phase SDE at every lambda of the grid, on one tape.

    ``lambda_grid`` is (L,) shared by all paths or (P, L) per path for a
    batched tape.  Returns the lifted phase at the final time (and optionally
    recorded paths).
    """
    kind = PhaseKind(kind)
    segs = as_segments(tape)
    T = check_horizon(segs, horizon, dt)
    lam = np.asarray(lambda_grid, dtype=float)
    shape = _grid_shape(segs[0], lam)
    nd = len(shape)
    phi = np.zeros(shape)

    if kind is PhaseKind.CRITICAL:
        channels = ("B", "B2", "B3")

        def step(phi, t, h, dB, dB2, dB3):
            c = np.cos(phi)
            s = np.sin(phi)
            phi += lam * h + expand(dB, nd) + SQRT_HALF * (c * expand(dB2, nd) + s * expand(dB3, nd))
            return phi

    elif kind is PhaseKind.CRITICAL_E0:
        channels = ("B1", "B2")
        if e0_drift not in ("stated", "ito"):
            raise ValueError("e0_drift must be 'stated' or 'ito'")
        ito = e0_drift == "ito"

        def step(phi, t, h, dB1, dB2):
            c = np.cos(phi)
            if ito:
                drift = -0.25 * np.sin(2.0 * phi)
                phi += lam * h + drift * h + expand(dB1, nd) - c * expand(dB2, nd)
            else:
                drift = 0.25 * np.cos(2.0 * phi)
                phi += lam * h + drift * h + expand(dB1, nd) + c * expand(dB2, nd)
            return phi

    else:
        if float(segs[-1].time_grid()[-1]) >= 1.0:
            raise ValueError("decaying kind needs a horizon below 1 (coefficient blows up at t = 1)")
        channels = ("B", "B2", "B3")

        def step(phi, t, h, dB, dB2, dB3):
            g = sigma_rho / math.sqrt(1.0 - t)
            c = np.cos(phi)
            s = np.sin(phi)
            phi += lam * h + g * (expand(dB, nd) + SQRT_HALF * (c * expand(dB2, nd) + s * expand(dB3, nd)))
            return phi

    rec = Recorder(record_every, phi) if record_every else None
    phi = march(segs, channels, phi, step, rec)
    times = values = None
    if rec is not None:
        times, values = rec.result()
    return PhasePathFamily(kind=kind, lambda_grid=lam, dt=segs[0].dt, horizon=T, final=phi,
                           times=times, values=values, tape=tape if isinstance(tape, NoiseTape) else None)


def phase_terminal(lambda_grid, tape, **kw) -> np.ndarray:
    """Final lifted phase of the critical family (shape batch + (L,))."""
    kind = kw.pop("kind", PhaseKind.CRITICAL)
    return integrate_phase_family(kind, lambda_grid, None, tape, **kw).final


# ---------------------------------------------------------------------------
# lambda-derivatives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivativePaths:
    phi: np.ndarray
    varpi: np.ndarray
    second: np.ndarray | None
    min_varpi: np.ndarray  # running minimum of varpi over t > 0


def integrate_derivative(lam, horizon: float | None, tape, dt: float | None = None,
                         second: bool = False) -> DerivativePaths:
    """Joint Euler scheme for phi (critical family) and its lambda-derivatives.

    d varpi = dt + varpi Im[e^{-i phi} dW];
    d phi'' = phi'' Im[e^{-i phi} dW] - varpi^2 Re[e^{-i phi} dW].
    """
    segs = as_segments(tape)
    check_horizon(segs, horizon, dt)
    lam = np.asarray(lam, dtype=float)
    bs = segs[0].batch_shape
    shape = np.broadcast_shapes(bs, lam.shape)
    nd = len(shape)
    state = {
        "phi": np.zeros(shape),
        "w": np.zeros(shape),
        "w2": np.zeros(shape) if second else None,
        "min": np.full(shape, np.inf),
    }

    def step(st, t, h, dB, dB2, dB3):
        phi, w = st["phi"], st["w"]
        c = np.cos(phi)
        s = np.sin(phi)
        dWr = SQRT_HALF * expand(dB2, nd)
        dWi = SQRT_HALF * expand(dB3, nd)
        re = c * dWr + s * dWi
        im = c * dWi - s * dWr
        if st["w2"] is not None:
            st["w2"] = st["w2"] + st["w2"] * im - w * w * re
        st["w"] = w + h + w * im
        st["phi"] = phi + lam * h + expand(dB, nd) + re
        st["min"] = np.minimum(st["min"], st["w"])
        return st

    st = march(segs, ("B", "B2", "B3"), state, step)
    return DerivativePaths(phi=st["phi"], varpi=st["w"], second=st["w2"], min_varpi=st["min"])


def sample_derivative_functional(t: float, tape: NoiseTape) -> np.ndarray:
    """int_0^t exp(-(B_s - B_t)/sqrt(2) + (s - t)/4) ds by the trapezoid rule on channel B."""
    if not t > 0:
        raise ValueError("t must be positive")
    grid = tape.time_grid()
    k = int(np.searchsorted(grid, t - 1e-9 * t))
    if k > tape.steps or abs(grid[k] - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"t={t} is not on the tape grid")
    B = tape.slice_steps(0, k).cumulative("B")
    s = grid[: k + 1]
    f = np.exp(-(B - B[..., -1:]) * SQRT_HALF + (s - t) / 4.0)
    return trapezoid(f, s, axis=-1)

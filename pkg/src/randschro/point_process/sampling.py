"""Samplers for Sch_tau, Sch_tau^*, the carousel construction and Sine_beta counts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..randomness import NoiseTape, make_tape_batch
from ..sde import (boundary_exit, integrate_carousel, integrate_phase_family, integrate_relative_family,
                   sine_beta_segments)
from ..sde._march import as_segments, horizon_of

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PointSample:
    points: np.ndarray
    window: tuple[float, float]
    provenance: str
    tau: float | None = None
    beta: float | None = None
    seed: int | None = None

    def __post_init__(self):
        p = np.asarray(self.points)
        if np.any(np.diff(p) <= 0):
            raise ValueError("points must be strictly increasing")
        a, b = self.window
        if len(p) and (p[0] < a or p[-1] > b):
            raise ValueError("points outside the declared window")


def write_points_csv(path, samples: Sequence[PointSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "point"])
        for i, s in enumerate(samples):
            sid = s.seed if s.seed is not None else i
            for x in s.points:
                w.writerow([sid, repr(float(x))])


def lattice_count(lo: np.ndarray, hi: np.ndarray, offset: np.ndarray | float = 0.0) -> np.ndarray:
    """#((2 pi Z + offset) ∩ [lo, hi]), zero when hi < lo."""
    lo = np.asarray(lo) - offset
    hi = np.asarray(hi) - offset
    c = np.floor(hi / TWO_PI) - np.ceil(lo / TWO_PI) + 1
    return np.maximum(c, 0).astype(np.int64)


def sch_phase(lams, tau: float, tape, **kw) -> np.ndarray:
    """phi^{lambda/tau}(tau) for every lambda (tape must cover [0, tau])."""
    return integrate_phase_family("critical", np.asarray(lams, dtype=float) / tau, tau, tape, **kw).final


def sch_counts(tau: float, a: float, b: float, tape) -> np.ndarray:
    phi = sch_phase([a, b], tau, tape)
    return lattice_count(phi[..., 0], phi[..., 1])


def sch_counts_grid(tau: float, lams: Sequence[float], tape) -> np.ndarray:
    """Counts in [lams[0], lams[j]] for each j (shape batch + (L,))."""
    phi = sch_phase(lams, tau, tape)
    return lattice_count(phi[..., :1], phi)


def sch_star_counts(tau: float, a: float, b: float, tape: NoiseTape, shifts: np.ndarray) -> np.ndarray:
    """Counts of Sch_tau + U in [a, b], i.e. of Sch_tau in [a - U, b - U]."""
    U = np.asarray(shifts, dtype=float).reshape(tape.batch_shape)
    lams = np.stack([a - U, b - U], axis=-1)
    phi = sch_phase(lams, tau, tape)
    return lattice_count(phi[..., 0], phi[..., 1])


def _illinois(f, lo, hi, flo, fhi, tol, max_iter=200):
    """Vectorized Illinois false position for increasing f with flo <= 0 < fhi.

    Every third iteration takes a bisection step so the bracket always shrinks.
    """
    lo, hi, flo, fhi = (np.array(x, dtype=float) for x in (lo, hi, flo, fhi))
    side = np.zeros(lo.shape, int)
    for it in range(max_iter):
        active = (hi - lo) >= tol
        if not np.any(active):
            break
        denom = fhi - flo
        if it % 3 == 2:
            x = 0.5 * (lo + hi)
        else:
            x = lo - flo * (hi - lo) / np.where(denom > 0, denom, 1.0)
            x = np.where(denom > 0, x, 0.5 * (lo + hi))
        x = np.clip(x, lo, hi)
        fx = f(np.where(active, x, lo))
        up = fx > 0
        # halve the stale endpoint value when the same side moves twice
        new_hi = np.where(up, x, hi)
        new_lo = np.where(up, lo, x)
        new_fhi = np.where(up, fx, np.where(side == -1, 0.5 * fhi, fhi))
        new_flo = np.where(up, np.where(side == 1, 0.5 * flo, flo), fx)
        exact = fx == 0
        new_lo = np.where(exact, x, new_lo)
        new_hi = np.where(exact, x, new_hi)
        lo = np.where(active, new_lo, lo)
        hi = np.where(active, new_hi, hi)
        flo = np.where(active, new_flo, flo)
        fhi = np.where(active, new_fhi, fhi)
        side = np.where(up, 1, -1)
    return 0.5 * (lo + hi)


def sample_sch_points(tau: float, window: tuple[float, float], tape: NoiseTape, tol_lambda: float = 1e-6,
                      grid_spacing: float = 0.25, seeds: Sequence[int] | None = None) -> list[PointSample]:
    """All points of Sch_tau in the closed window for every path of a batched tape.

    A shared lambda grid brackets each lattice crossing of phi^{lambda/tau}(tau);
    every bracket is then shrunk by replaying the same tape at new lambdas.
    """
    if not tol_lambda > 0:
        raise ValueError("tol_lambda must be positive")
    a, b = map(float, window)
    L = max(2, int(math.ceil((b - a) / grid_spacing)) + 1)
    grid = np.linspace(a, b, L)
    fam = integrate_phase_family("critical", grid / tau, tau, tape)
    phi = fam.final
    if fam.monotone_violations() > 0:
        raise ArithmeticError("phase not monotone in lambda at the final time; refine dt")
    batch = phi.shape[:-1]
    phi2 = phi.reshape(-1, L)
    P = phi2.shape[0]
    m_lo = np.ceil(phi2[:, 0] / TWO_PI).astype(np.int64)
    m_hi = np.floor(phi2[:, -1] / TWO_PI).astype(np.int64)
    cnt = np.maximum(m_hi - m_lo + 1, 0)
    K = int(cnt.max(initial=0))
    results = [np.empty(0) for _ in range(P)]
    if K > 0:
        m = m_lo[:, None] + np.arange(K)[None, :]
        valid = np.arange(K)[None, :] < cnt[:, None]
        target = TWO_PI * m
        # cell j with phi_j < target <= phi_{j+1}; a target hit exactly at the left end gives j = -1
        j = np.empty((P, K), dtype=np.int64)
        for p in range(P):
            j[p] = np.searchsorted(phi2[p], target[p], side="left") - 1
        at_left = j < 0
        j = np.clip(j, 0, L - 2)
        rows = np.arange(P)[:, None]
        lo = grid[j]
        hi = grid[j + 1]
        flo = phi2[rows, j] - target
        fhi = phi2[rows, j + 1] - target
        flo = np.where(valid, flo, -1.0)
        fhi = np.where(valid, fhi, 1.0)

        def f(x):
            lam = x.reshape(batch + (K,)) / tau
            return integrate_phase_family("critical", lam, tau, tape).final.reshape(P, K) - target

        roots = _illinois(f, lo, hi, flo, fhi, tol_lambda)
        roots = np.where(at_left, grid[0], roots)
        for p in range(P):
            results[p] = np.sort(roots[p][valid[p]])
    seeds = list(seeds) if seeds is not None else list(range(P))
    return [PointSample(results[p], (a, b), "phase-sde", tau=tau, seed=seeds[p]) for p in range(P)]


def carousel_counts(tau: float, Lam: float, tape: NoiseTape, u: np.ndarray) -> np.ndarray:
    """Points of {lambda in [0, Lam] : x^{lambda/tau}(tau) = V(infinity)}."""
    st = integrate_carousel([Lam / tau], tau, tape)
    eta = boundary_exit(st.V, TWO_PI * np.asarray(u).reshape(st.V.shape))
    g = st.gamma[..., 0]
    return np.where(g >= eta, np.floor((g - eta) / TWO_PI) + 1, 0).astype(np.int64)


def sine_beta_tape(master_seed: int, stream_ids, beta: float, lam_max: float, Tmax: float,
                   base_dt: float = 2.0 ** -7, max_rotation: float = 0.02) -> list[NoiseTape]:
    steps = int(math.ceil(Tmax / base_dt - 1e-9))
    base = make_tape_batch(master_seed, stream_ids, base_dt, steps, ("B1", "B2"))
    return sine_beta_segments(base, lam_max, beta, max_rotation)


@dataclass(frozen=True)
class SineBetaCounts:
    counts: np.ndarray
    residual: np.ndarray
    Tmax: float

    @property
    def flagged(self) -> np.ndarray:
        return self.residual > 0.2


def count_sine_beta(beta: float, lambda_grid, tape, Tmax: float | None = None) -> SineBetaCounts:
    """g(lambda) = round(alpha^lambda(Tmax)/2 pi) on each path."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    segs = as_segments(tape)
    T = horizon_of(segs)
    if Tmax is not None and T + 1e-9 < Tmax:
        raise ValueError(f"tape ends at {T} before Tmax={Tmax}")
    rel = integrate_relative_family("sine-beta", lambda_grid, segs, beta=beta)
    return SineBetaCounts(rel.counts(), rel.rounding_residual(), T)

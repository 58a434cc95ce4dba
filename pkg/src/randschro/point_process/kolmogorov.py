"""Backward Kolmogorov solver for small-interval point counts of Sch_tau.

With psi = phi^0(tau) and alpha = phi^{lam}(tau) - phi^0(tau), the count in
[0, eps] (lam = eps/tau) is #(2 pi Z ∩ [psi, psi + alpha]).  The pair
(psi, alpha) is a diffusion whose coefficients depend on alpha only:

    L = lam d_a + 3/4 d_pp - sin^2(a/2) d_p d_a + sin^2(a/2) d_aa.

In Y = log tan(alpha/4) on each period [2 pi k, 2 pi (k+1)) and a Fourier
mode e^{i m psi}, this becomes the 1-D operator

    [lam/2 cosh Y + tanh(Y)/4 - i m /(2 cosh Y)] d_Y + 1/4 d_YY - 3/4 m^2,

solved backward in time by implicit Euler with upwinding.  Periods are glued
end to end (Y = +inf of one period is Y = -inf of the next).  Probabilities far
below machine epsilon stay positive because the scheme is monotone; the
time discretization is first order, so far-tail values converge slowly in
nt while log-slopes across eps are stable.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded

TWO_PI = 2.0 * math.pi


def _mode_payoff(alpha_minus: np.ndarray, m: int, need: int) -> np.ndarray:
    """Fourier coefficient in psi of 1{#(2 pi Z ∩ [psi, psi + alpha]) >= need}.

    ``alpha_minus`` is alpha - 2 pi (need - 1) in [0, 2 pi): the event is then
    (-psi mod 2 pi) <= alpha_minus.
    """
    c = np.clip(alpha_minus, 0.0, TWO_PI)
    if m == 0:
        return (c / TWO_PI).astype(complex)
    return (np.exp(1j * m * c) - 1.0) / (1j * m * TWO_PI)


def _solve_mode(lam: float, T: float, m: int, need: int, L: float, h: float, nt: int, Y0: float) -> complex:
    Y1 = np.arange(-L, L + 0.5 * h, h)
    N1 = len(Y1)
    P = need  # periods: alpha in [0, 2 pi need); beyond that the payoff is 1
    Y = np.tile(Y1, P)
    N = len(Y)
    bre = 0.5 * lam * np.cosh(Y) + 0.25 * np.tanh(Y)
    bim = -0.5 * m / np.cosh(Y)
    D = 0.25
    dt = T / nt
    bp, bm = np.maximum(bre, 0.0), np.minimum(bre, 0.0)
    # central difference for the (small, bounded) imaginary drift
    lo = -dt * (D / h**2 - bm / h) + dt * 1j * bim / (2 * h)
    di = 1.0 + dt * (2 * D / h**2 + bp / h - bm / h + 0.75 * m * m) + 0j
    up = -dt * (D / h**2 + bp / h) - dt * 1j * bim / (2 * h)
    # Y = -L of the first period: pure upwind transport (alpha = 0 is an entrance point)
    lo[0] = 0.0
    di[0] = 1.0 + dt * (bp[0] / h + 0.75 * m * m)
    up[0] = -dt * bp[0] / h
    glue = [(p + 1) * N1 - 1 for p in range(P - 1)]
    for j in glue:
        lo[j], di[j], up[j] = 0.0, 1.0, -1.0
    lo[-1], di[-1], up[-1] = 0.0, 1.0, 0.0
    ab = np.zeros((3, N), dtype=complex)
    ab[0, 1:] = up[:-1]
    ab[1] = di
    ab[2, :-1] = lo[1:]
    # terminal payoff: only the last period carries a fractional payoff
    alpha_last = 4.0 * np.arctan(np.exp(Y1))
    u = np.zeros(N, dtype=complex)
    u[(P - 1) * N1:] = _mode_payoff(alpha_last, m, need)
    top = 1.0 if m == 0 else 0.0
    u[-1] = top
    for _ in range(nt):
        rhs = u.copy()
        rhs[-1] = top
        rhs[glue] = 0.0
        u = solve_banded((1, 1), ab, rhs, check_finite=False)
    return complex(np.interp(Y0, Y1, u[:N1].real) + 1j * np.interp(Y0, Y1, u[:N1].imag))


def count_tail_probability(tau: float, eps: float, need: int = 2, modes: int = 8, L: float = 25.0,
                           h: float = 0.01, nt: int = 1000, Y0: float | None = None) -> float:
    """P(Sch_tau[0, eps] >= need) from the backward equation.

    ``need = 1`` and ``need = 2`` are supported.  The start alpha(0) = 0 is
    represented by Y0 deep in the left tail (default: -L + 5).
    """
    if not (tau > 0 and eps > 0):
        raise ValueError("tau and eps must be positive")
    if need not in (1, 2):
        raise ValueError("need must be 1 or 2")
    Y0 = -L + 5.0 if Y0 is None else Y0
    lam = eps / tau
    total = _solve_mode(lam, tau, 0, need, L, h, nt, Y0).real
    for m in range(1, modes + 1):
        total += 2.0 * _solve_mode(lam, tau, m, need, L, h, nt, Y0).real
    return max(total, 0.0)


def relative_phase_tail(tau: float, eps: float, L: float = 25.0, h: float = 0.01, nt: int = 2000,
                        Y0: float | None = None) -> float:
    """P(alpha^{eps/tau}(tau) >= 2 pi), an upper bound for P(Sch_tau[0, eps] >= 2)."""
    Y0 = -L + 5.0 if Y0 is None else Y0
    lam = eps / tau
    Y = np.arange(-L, L + 0.5 * h, h)
    N = len(Y)
    b = 0.5 * lam * np.cosh(Y) + 0.25 * np.tanh(Y)
    D = 0.25
    dt = tau / nt
    bp, bm = np.maximum(b, 0.0), np.minimum(b, 0.0)
    lo = -dt * (D / h**2 - bm / h)
    di = 1.0 + dt * (2 * D / h**2 + bp / h - bm / h)
    up = -dt * (D / h**2 + bp / h)
    lo[0], di[0], up[0] = 0.0, 1.0 + dt * bp[0] / h, -dt * bp[0] / h
    lo[-1], di[-1], up[-1] = 0.0, 1.0, 0.0
    ab = np.zeros((3, N))
    ab[0, 1:] = up[:-1]
    ab[1] = di
    ab[2, :-1] = lo[1:]
    u = np.zeros(N)
    u[-1] = 1.0
    for _ in range(nt):
        u[-1] = 1.0
        u = solve_banded((1, 1), ab, u, check_finite=False)
    return float(np.interp(Y0, Y, u))

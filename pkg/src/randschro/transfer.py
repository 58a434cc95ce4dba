"""Transfer matrices, the regularized chains Q and X, and the discrete phase.

Conventions: ``eps_l = lambda/(rho n) - v_l`` and ``M_l = T(E + eps_l) M_{l-1}``.
``Q_l = T(E)^{-l} M_l`` and ``X_l = Zinv Q_l Z``.  The discrete phase is the
argument of ``u_l = a_l / b_l`` where ``(a_l, b_l) = Zinv Q_l e1``; it starts
at ``u_0 = -1`` (lifted value pi) and obeys the Möbius recursion
``u_l = z^{2l} X_l(z^{-2l} u_{l-1})``.  ``lambda`` is an eigenvalue iff
``u_n = -z^{2n+2}``, equivalently ``(M_n)_{11} = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .operator_model import SpectralWindow, bulk_z, density_rho

TWO_PI = 2.0 * math.pi
# largest per-step phase increment accepted by the lift
LIFT_GUARD = math.pi / 2


class PhaseStepError(ArithmeticError):
    pass


class LiftError(ArithmeticError):
    pass


def transfer_matrix(x: float | complex) -> np.ndarray:
    dtype = complex if isinstance(x, complex) else float
    return np.array([[x, -1.0], [1.0, 0.0]], dtype=dtype)


def transfer_inverse(x) -> np.ndarray:
    dtype = complex if isinstance(x, complex) else float
    return np.array([[0.0, 1.0], [-1.0, x]], dtype=dtype)


@dataclass(frozen=True)
class DiagonalizationData:
    E: float
    z: complex
    Z: np.ndarray
    D: np.ndarray
    Zinv: np.ndarray

    @property
    def rho(self) -> float:
        return density_rho(self.E)


def diagonalization(E: float) -> DiagonalizationData:
    z = bulk_z(E)
    rho = density_rho(E)
    zb = z.conjugate()
    Z = np.array([[zb, z], [1.0, 1.0]], dtype=complex)
    D = np.diag([zb, z]).astype(complex)
    Zinv = (1j * rho / 2.0) * np.array([[1.0, -z], [-1.0, zb]], dtype=complex)
    return DiagonalizationData(E=float(E), z=z, Z=Z, D=D, Zinv=Zinv)


def rotation_powers(z: complex, n: int) -> np.ndarray:
    """z^(2l) for l = 0..n, computed from the angle to avoid error build-up."""
    theta = math.atan2(z.imag, z.real)
    return np.exp(2j * theta * np.arange(n + 1))


def perturbations(E: float, v: np.ndarray, lam) -> np.ndarray:
    """eps_l for l = 1..n; broadcasts lam (...,) against v (..., n) -> (..., n)."""
    v = np.asarray(v)
    n = v.shape[-1]
    lam = np.asarray(lam)
    return lam[..., None] / (density_rho(E) * n) - v


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransferChainState:
    ell: int
    M: np.ndarray
    Q: np.ndarray
    X: np.ndarray
    lam: complex


@dataclass(frozen=True)
class ChainPath:
    E: float
    lam: complex
    M: np.ndarray  # (n+1, 2, 2)
    Q: np.ndarray
    X: np.ndarray

    @property
    def n(self) -> int:
        return self.M.shape[0] - 1

    def states(self) -> Iterator[TransferChainState]:
        for ell in range(self.n + 1):
            yield TransferChainState(ell, self.M[ell], self.Q[ell], self.X[ell], self.lam)

    def phase(self) -> np.ndarray:
        """Lifted discrete phase read off X: u = (X11 - X12)/(X21 - X22)."""
        u = (self.X[:, 0, 0] - self.X[:, 0, 1]) / (self.X[:, 1, 0] - self.X[:, 1, 1])
        return lift(np.angle(u), start=math.pi)

    def to_csv(self, path) -> None:
        ell = np.arange(self.n + 1)
        X = self.X
        cols = [ell, X[:, 0, 0].real, X[:, 0, 0].imag, X[:, 0, 1].real, X[:, 0, 1].imag, self.phase()]
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header="ell,Re(X11),Im(X11),Re(X12),Im(X12),phi_lifted", comments="",
                   fmt=["%d"] + ["%.12g"] * 5)


def evolve_chain(w: SpectralWindow | float, potential: Sequence[float], lam: complex = 0.0) -> ChainPath:
    """M, Q (rank-one update) and X (conjugated update) along the whole chain."""
    E = w.E if isinstance(w, SpectralWindow) else float(w)
    v = np.asarray(potential, dtype=float)
    n = len(v)
    dd = diagonalization(E)
    rho = dd.rho
    cplx = isinstance(lam, complex) and lam.imag != 0.0
    dtype = complex if cplx else float
    lam_v = lam if cplx else float(np.real(lam))
    eps = lam_v / (rho * n) - v
    Tinv = transfer_inverse(E)
    T = transfer_matrix(E)
    z2 = rotation_powers(dd.z, n)

    M = np.empty((n + 1, 2, 2), dtype=dtype)
    Q = np.empty((n + 1, 2, 2), dtype=dtype)
    X = np.empty((n + 1, 2, 2), dtype=complex)
    M[0] = Q[0] = np.eye(2)
    X[0] = np.eye(2)
    p = np.array([1.0, 0.0])  # T^{-l} e1
    r = np.array([0.0, 1.0])  # (e1^T T^{l-1})^T
    for ell in range(1, n + 1):
        e = eps[ell - 1]
        Mp = M[ell - 1]
        M[ell, 0] = (E + e) * Mp[0] - Mp[1]
        M[ell, 1] = Mp[0]
        p = Tinv @ p
        r = T.T @ r
        Q[ell] = Q[ell - 1] + e * np.outer(p, r @ Q[ell - 1])
        c = 0.5j * rho * e
        O = np.array([[1.0, z2[ell]], [-z2[ell].conjugate(), -1.0]])
        X[ell] = X[ell - 1] + c * (O @ X[ell - 1])
    return ChainPath(E=E, lam=lam, M=M, Q=Q, X=X)


def sup_trace_statistic(chains: Sequence[ChainPath]) -> float:
    """max over steps and chains of Tr(M M^*)."""
    best = 0.0
    for ch in chains:
        tr = np.einsum("lij,lij->l", ch.M, ch.M.conj()).real
        best = max(best, float(tr.max()))
    return best


def sup_trace(E: float, v: np.ndarray, lambda_grid: Sequence[float]) -> np.ndarray:
    """Vectorized max_l Tr(M_l M_l^T) for real lambda; v (B, n), result (B,)."""
    v = np.atleast_2d(v)
    lam = np.asarray(lambda_grid, dtype=float)
    eps = perturbations(E, v[:, None, :], lam[None, :])
    shape = eps.shape[:-1]
    m11, m12 = np.ones(shape), np.zeros(shape)
    m21, m22 = np.zeros(shape), np.ones(shape)
    best = np.full(shape, 2.0)
    for ell in range(eps.shape[-1]):
        x = E + eps[..., ell]
        m11, m12, m21, m22 = x * m11 - m21, x * m12 - m22, m11, m12
        best = np.maximum(best, m11 * m11 + m12 * m12 + m21 * m21 + m22 * m22)
    return best.max(axis=-1)


# ---------------------------------------------------------------------------
# discrete phase
# ---------------------------------------------------------------------------


def lift(angles: np.ndarray, start: float | None = None, axis: int = -1) -> np.ndarray:
    """Continuous lift of principal angles along ``axis`` (increments in (-pi, pi])."""
    a = np.moveaxis(np.asarray(angles, dtype=float), axis, -1)
    inc = np.diff(a, axis=-1)
    inc = inc - TWO_PI * np.ceil((inc - math.pi) / TWO_PI)
    out = np.concatenate([a[..., :1], a[..., :1] + np.cumsum(inc, axis=-1)], axis=-1)
    if start is not None:
        # shift by the multiple of 2 pi that puts the first value nearest ``start``
        out = out - TWO_PI * np.round((a[..., :1] - start) / TWO_PI)
    return np.moveaxis(out, -1, axis)


def mobius_X(xi, eps, rho: float):
    c = 0.5j * rho * np.asarray(eps)
    return ((1.0 + c) * xi + c) / (1.0 - c - c * xi)


def mobius_X_inv(eta, eps, rho: float):
    c = 0.5j * rho * np.asarray(eps)
    return ((1.0 - c) * eta - c) / (c * eta + 1.0 + c)


@dataclass(frozen=True)
class DiscretePhaseState:
    ell: int
    unit: complex
    lifted: float

    @classmethod
    def initial(cls) -> "DiscretePhaseState":
        return cls(0, complex(-1.0, 0.0), math.pi)


def discrete_phase_step(state: DiscretePhaseState, w: SpectralWindow | float, eps_ell: float) -> DiscretePhaseState:
    """Apply step l = state.ell + 1 of the Möbius recursion."""
    E = w.E if isinstance(w, SpectralWindow) else float(w)
    rho = density_rho(E)
    ell = state.ell + 1
    if abs(abs(state.unit) - 1.0) > 1e-10:
        raise PhaseStepError(f"state at step {state.ell} is off the unit circle: |u| = {abs(state.unit)!r}")
    z = bulk_z(E)
    theta = math.atan2(z.imag, z.real)
    rot = complex(math.cos(2 * theta * ell), math.sin(2 * theta * ell))
    xi = rot.conjugate() * state.unit
    c = 0.5j * rho * eps_ell
    den = 1.0 - c - c * xi
    if abs(den) < 1e-12:
        raise PhaseStepError(f"degenerate Möbius denominator at step {ell} (eps={eps_ell!r}, E={E!r})")
    new = rot * (((1.0 + c) * xi + c) / den)
    new /= abs(new)
    inc = math.atan2((new * state.unit.conjugate()).imag, (new * state.unit.conjugate()).real)
    return DiscretePhaseState(ell, new, state.lifted + inc)


def forward_phase(E: float, v: np.ndarray, lams: np.ndarray, stop: int | None = None,
                  record: bool = False) -> np.ndarray:
    """Lifted forward phase phi_l for l up to ``stop`` (default n).

    ``v`` has shape (..., n) and ``lams`` shape (..., L) with matching leading
    axes; returns phi_stop with shape (..., L), or the full history (..., L, stop+1).
    """
    v = np.asarray(v, dtype=float)
    lams = np.asarray(lams, dtype=float)
    n = v.shape[-1]
    stop = n if stop is None else int(stop)
    rho = density_rho(E)
    z2 = rotation_powers(bulk_z(E), n)
    eps = lams[..., :, None] / (rho * n) - v[..., None, :]
    u = np.full(eps.shape[:-1], -1.0 + 0j)
    phi = np.full(u.shape, math.pi)
    hist = [phi.copy()] if record else None
    for ell in range(1, stop + 1):
        c = 0.5j * rho * eps[..., ell - 1]
        xi = z2[ell].conjugate() * u
        new = z2[ell] * (((1.0 + c) * xi + c) / (1.0 - c - c * xi))
        new /= np.abs(new)
        inc = np.angle(new * u.conj())
        if np.any(np.abs(inc) >= LIFT_GUARD):
            raise LiftError(f"phase increment above pi/2 at step {ell}")
        phi = phi + inc
        u = new
        if record:
            hist.append(phi.copy())
    return np.stack(hist, axis=-1) if record else phi


def backward_phase(E: float, v: np.ndarray, lams: np.ndarray, k: int) -> np.ndarray:
    """Lifted backward phase phi~_k, started from arg(-z^(2n+2))."""
    v = np.asarray(v, dtype=float)
    lams = np.asarray(lams, dtype=float)
    n = v.shape[-1]
    rho = density_rho(E)
    z2 = rotation_powers(bulk_z(E), n + 1)
    start = -z2[n + 1]
    eps = lams[..., :, None] / (rho * n) - v[..., None, :]
    u = np.full(eps.shape[:-1], start)
    phi = np.full(u.shape, math.atan2(start.imag, start.real))
    for j in range(k):
        ell = n - j
        c = 0.5j * rho * eps[..., ell - 1]
        eta = z2[ell].conjugate() * u
        new = z2[ell] * (((1.0 - c) * eta - c) / (c * eta + 1.0 + c))
        new /= np.abs(new)
        inc = np.angle(new * u.conj())
        if np.any(np.abs(inc) >= LIFT_GUARD):
            raise LiftError(f"backward phase increment above pi/2 at step {ell}")
        phi = phi + inc
        u = new
    return phi


def oscillation_function(E: float, v: np.ndarray, lams: np.ndarray, k: int = 0) -> np.ndarray:
    """d(lambda) = phi_{n-k} - phi~_k; eigenvalues are where d crosses 2 pi Z."""
    n = np.asarray(v).shape[-1]
    return forward_phase(E, v, lams, stop=n - k) - backward_phase(E, v, lams, k)


def _lattice_below(d: np.ndarray) -> np.ndarray:
    return np.ceil(d / TWO_PI)


def oscillation_count(w: SpectralWindow | float, potential, lambda1: float, lambda2: float, k: int = 0) -> int:
    """Rescaled eigenvalues in [lambda1, lambda2), from lattice points of the phase difference.

    d is increasing in lambda, and the count is #(2 pi Z ∩ [d(lambda1), d(lambda2))),
    which matches sturm_count(mu2) - sturm_count(mu1).
    """
    E = w.E if isinstance(w, SpectralWindow) else float(w)
    if lambda2 < lambda1:
        raise ValueError("lambda1 must not exceed lambda2")
    if lambda1 == lambda2:
        return 0
    d = oscillation_function(E, potential, np.array([lambda1, lambda2]), k)
    return int(_lattice_below(d[1]) - _lattice_below(d[0]))


def oscillation_counts(E: float, v: np.ndarray, lam1: float, lam2: float, k: int = 0) -> np.ndarray:
    """Batched oscillation_count for v of shape (B, n)."""
    v = np.atleast_2d(v)
    lams = np.broadcast_to(np.array([lam1, lam2], dtype=float), (v.shape[0], 2))
    d = oscillation_function(E, v, lams, k)
    return (_lattice_below(d[:, 1]) - _lattice_below(d[:, 0])).astype(np.int64)


def oscillation_roots(E: float, v: np.ndarray, lam1: float, lam2: float, tol: float = 1e-9,
                      k: int = 0) -> list[np.ndarray]:
    """Locate the rescaled eigenvalues in [lam1, lam2) by bisection on d(lambda) - 2 pi m."""
    v = np.atleast_2d(v)
    B = v.shape[0]
    d = oscillation_function(E, v, np.broadcast_to(np.array([lam1, lam2], dtype=float), (B, 2)), k)
    m0 = _lattice_below(d[:, 0])
    cnt = (_lattice_below(d[:, 1]) - m0).astype(int)
    width = int(cnt.max(initial=0))
    if width == 0:
        return [np.empty(0) for _ in range(B)]
    target = TWO_PI * (m0[:, None] + np.arange(width)[None, :])
    valid = np.arange(width)[None, :] < cnt[:, None]
    a = np.full((B, width), float(lam1))
    b = np.full((B, width), float(lam2))
    iters = int(math.ceil(math.log2((lam2 - lam1) / tol))) + 1
    for _ in range(iters):
        mid = 0.5 * (a + b)
        above = oscillation_function(E, v, mid, k) >= target
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
    mid = 0.5 * (a + b)
    return [mid[i][valid[i]] for i in range(B)]


# ---------------------------------------------------------------------------
# secular function
# ---------------------------------------------------------------------------


def secular_sign(E: float, v: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """sign((M_n^lambda)_{11}); the column recursion is rescaled each step."""
    v = np.asarray(v, dtype=float)
    lams = np.asarray(lams, dtype=float)
    eps = perturbations(E, v[..., None, :], lams)
    a = np.ones(eps.shape[:-1])
    b = np.zeros(eps.shape[:-1])
    for ell in range(eps.shape[-1]):
        a, b = (E + eps[..., ell]) * a - b, a
        s = np.maximum(np.abs(a), np.abs(b))
        a /= s
        b /= s
    return np.sign(a)


class SecularGridError(RuntimeError):
    pass


def secular_roots(w: SpectralWindow | float, potential, lambda_bracket: tuple[float, float], tol: float,
                  spacing: float | None = None, max_refine: int = 12) -> np.ndarray:
    """Zeros of lambda -> (M_n^lambda)_{11} in the bracket.

    Sign changes are scanned on a grid that is halved until the root set is
    stable and every gap between consecutive roots spans at least four cells.
    """
    E = w.E if isinstance(w, SpectralWindow) else float(w)
    if not tol > 0:
        raise ValueError("tol must be positive")
    v = np.asarray(potential, dtype=float)
    lo, hi = map(float, lambda_bracket)
    h = spacing or math.pi / 4
    prev = None
    for _ in range(max_refine):
        m = max(2, int(math.ceil((hi - lo) / h)) + 1)
        grid = np.linspace(lo, hi, m)
        sg = secular_sign(E, v, grid)
        change = np.flatnonzero(sg[:-1] * sg[1:] <= 0)
        n_roots = len(change)
        step = grid[1] - grid[0]
        if prev is not None and n_roots == prev[0]:
            cells = change
            if n_roots < 2 or np.diff(cells).min() >= 4:
                return _secular_bisect(E, v, grid[change], grid[change + 1], sg[change], tol)
        prev = (n_roots, step)
        h = step / 2
    raise SecularGridError(f"sign-change scan did not stabilize after {max_refine} refinements")


def _secular_bisect(E, v, a, b, sa, tol):
    a = a.copy()
    b = b.copy()
    if len(a) == 0:
        return np.empty(0)
    iters = int(math.ceil(math.log2(max((b - a).max(), tol) / tol))) + 1
    for _ in range(iters):
        mid = 0.5 * (a + b)
        sm = secular_sign(E, v, mid)
        same = sm == sa
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    return 0.5 * (a + b)

"""Random Jacobi operators with unit off-diagonal and a scaled random diagonal."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal, solve_banded

from .randomness import OmegaKind, SeedSpec, sample_omega

# smallest pivot magnitude allowed in the Sturm recurrence
PIVMIN = 1e-280


class Model(str, enum.Enum):
    CRITICAL = "critical"
    DECAYING = "decaying"


class InverseIterationError(RuntimeError):
    pass


def density_rho(E: float) -> float:
    """Asymptotic eigenvalue density factor 1/sqrt(1 - E^2/4) in the bulk."""
    E = float(E)
    if not abs(E) < 2.0:
        raise ValueError(f"E must satisfy |E| < 2, got {E}")
    return 1.0 / math.sqrt(1.0 - E * E / 4.0)


def bulk_z(E: float) -> complex:
    density_rho(E)
    return complex(E / 2.0, math.sqrt(1.0 - E * E / 4.0))


@dataclass(frozen=True)
class PotentialSpec:
    model: Model
    sigma: float
    n: int
    omega: OmegaKind = OmegaKind.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "omega", OmegaKind(self.omega))
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")

    def scale(self) -> np.ndarray:
        """Per-site standard deviation of the diagonal, index k = 1..n."""
        k = np.arange(1, self.n + 1, dtype=float)
        if self.model is Model.CRITICAL:
            return np.full(self.n, self.sigma / math.sqrt(self.n))
        return self.sigma / np.sqrt(self.n + 1 - k)

    def potential(self, omega: np.ndarray) -> np.ndarray:
        return self.scale() * np.asarray(omega, dtype=float)


@dataclass(frozen=True)
class SpectralWindow:
    E: float
    R: float
    sigma: float = 1.0

    def __post_init__(self):
        density_rho(self.E)
        if self.R < 0:
            raise ValueError("R must be non-negative")

    @property
    def rho(self) -> float:
        return density_rho(self.E)

    @property
    def z(self) -> complex:
        return bulk_z(self.E)

    @property
    def tau(self) -> float:
        return (self.sigma * self.rho) ** 2

    def energy_bounds(self, n: int) -> tuple[float, float]:
        half = self.R / (self.rho * n)
        return self.E - half, self.E + half


@dataclass(frozen=True)
class Hamiltonian:
    diagonal: np.ndarray

    @property
    def n(self) -> int:
        return len(self.diagonal)

    def dense(self) -> np.ndarray:
        n = self.n
        return np.diag(self.diagonal) + np.eye(n, k=1) + np.eye(n, k=-1)

    def leading(self, m: int) -> "Hamiltonian":
        return Hamiltonian(self.diagonal[:m])

    def to_csv(self, path) -> None:
        k = np.arange(1, self.n + 1)
        np.savetxt(path, np.column_stack([k, self.diagonal]), delimiter=",",
                   header="k,v_k", comments="", fmt=["%d", "%.17g"])


def build_hamiltonian(spec: PotentialSpec, seed: SeedSpec) -> Hamiltonian:
    omega = sample_omega(spec.omega, seed, spec.n)
    return Hamiltonian(spec.potential(omega))


def build_diagonals(spec: PotentialSpec, master_seed: int, stream_ids) -> np.ndarray:
    """Stack of diagonals, one row per stream id."""
    ids = list(stream_ids)
    out = np.empty((len(ids), spec.n))
    for i, s in enumerate(ids):
        out[i] = spec.potential(sample_omega(spec.omega, SeedSpec(master_seed, s), spec.n))
    return out


def sturm_counts(diagonals: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Number of eigenvalues strictly below ``mu`` for a batch of Jacobi matrices.

    ``diagonals`` has shape (..., n); ``mu`` broadcasts against the leading
    shape with any number of trailing axes, e.g. (B, n) with (B, M).  A pivot
    that is exactly zero is replaced by ``+PIVMIN``, which is the limit from
    below in ``mu`` and hence gives the strictly-below count.
    """
    diagonals = np.asarray(diagonals, dtype=float)
    mu = np.asarray(mu, dtype=float)
    lead = diagonals.shape[:-1]
    extra = mu.ndim - len(lead)
    if extra < 0:
        raise ValueError("mu must have at least the batch dimensions of the diagonals")
    a = diagonals.reshape(lead + (1,) * extra + diagonals.shape[-1:])
    count = np.zeros(np.broadcast_shapes(mu.shape, a.shape[:-1]), dtype=np.int64)
    d = np.ones(count.shape)
    for k in range(a.shape[-1]):
        d = (a[..., k] - mu) - 1.0 / d if k else np.broadcast_to(a[..., 0] - mu, count.shape)
        small = np.abs(d) < PIVMIN
        if small.any():
            d = np.where(small, PIVMIN, d)
        count += d < 0
    return count


def sturm_count(H: Hamiltonian, mu: float) -> int:
    return int(sturm_counts(H.diagonal[None, :], np.array([float(mu)]))[0])


def closed_count(diagonals: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Eigenvalue count in the closed interval [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.nextafter(np.asarray(hi, dtype=float), np.inf)
    both = np.stack(np.broadcast_arrays(lo, hi), axis=-1)
    c = sturm_counts(diagonals, both)
    return c[..., 1] - c[..., 0]


def bisect_eigenvalues(diagonals: np.ndarray, lo: float | np.ndarray, hi: float | np.ndarray,
                       tol: float) -> list[np.ndarray]:
    """All eigenvalues in the closed interval [lo, hi] of each matrix, to within ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    diagonals = np.atleast_2d(np.asarray(diagonals, dtype=float))
    B = diagonals.shape[0]
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (B,)).copy()
    hi_open = np.nextafter(np.broadcast_to(np.asarray(hi, dtype=float), (B,)), np.inf)
    c = sturm_counts(diagonals, np.stack([lo, hi_open], axis=1))
    c_lo, c_hi = c[:, 0], c[:, 1]
    width = int((c_hi - c_lo).max(initial=0))
    if width == 0:
        return [np.empty(0) for _ in range(B)]
    # eigenvalue with global index j (0-based) is where the count crosses j+1
    j = c_lo[:, None] + np.arange(width)[None, :]
    valid = j < c_hi[:, None]
    a = np.repeat(lo[:, None], width, axis=1)
    b = np.repeat(hi_open[:, None], width, axis=1)
    span = float((b - a).max())
    iters = max(1, int(math.ceil(math.log2(max(span, tol) / tol))) + 2)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = sturm_counts(diagonals, mid) > j
        b = np.where(below, mid, b)
        a = np.where(below, a, mid)
        if float((b - a).max()) < tol:
            break
    mid = 0.5 * (a + b)
    return [mid[i][valid[i]] for i in range(B)]


def eigenvalues_in_window(H: Hamiltonian, w: SpectralWindow, tol: float) -> np.ndarray:
    """Eigenvalues in the closed energy window (LAPACK bisection, absolute tolerance ``tol``)."""
    lo, hi = w.energy_bounds(H.n)
    hi = float(np.nextafter(hi, np.inf))
    if H.n == 1:
        return H.diagonal[(H.diagonal >= lo) & (H.diagonal <= hi)].copy()
    return eigh_tridiagonal(H.diagonal, np.ones(H.n - 1), eigvals_only=True, select="v",
                            select_range=(lo, hi), tol=tol)


def _banded(H: Hamiltonian, shift: float) -> np.ndarray:
    ab = np.ones((3, H.n))
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    ab[1] = H.diagonal - shift
    return ab


def inverse_iteration(H: Hamiltonian, mu: float, tol: float = 1e-12, max_iter: int = 20) -> np.ndarray:
    """Unit eigenvector for the eigenvalue closest to ``mu``.

    The sign is fixed so that the first entry above 1e-3 of the max modulus is positive.
    """
    n = H.n
    shift = float(mu)
    try:
        solve_banded((1, 1), _banded(H, shift), np.ones(n))
    except (LinAlgError, ValueError):
        shift += 2.0 * max(tol, 1e-15 * max(1.0, abs(shift)))
    ab = _banded(H, shift)
    x = np.random.default_rng(n).standard_normal(n)
    x /= np.linalg.norm(x)
    resid = np.inf
    for it in range(max_iter):
        y = solve_banded((1, 1), ab, x, check_finite=False)
        if not np.all(np.isfinite(y)):
            shift += 2.0 * tol
            ab = _banded(H, shift)
            continue
        y /= np.linalg.norm(y)
        Hy = H.diagonal * y
        Hy[1:] += y[:-1]
        Hy[:-1] += y[1:]
        rq = float(y @ Hy)
        resid = float(np.linalg.norm(Hy - rq * y))
        x = y
        if it >= 2 and resid < max(1e-10, 100 * tol):
            break
    else:
        raise InverseIterationError(f"inverse iteration at mu={mu!r} did not converge (residual {resid:.3g})")
    first = np.flatnonzero(np.abs(x) > 1e-3 * np.abs(x).max())[0]
    return -x if x[first] < 0 else x


@dataclass(frozen=True)
class DelocalizationReport:
    mu: float
    t: float
    min_pair: float
    max_pair: float
    lower: float
    upper: float
    norm: float

    @property
    def holds(self) -> bool:
        return self.lower < self.min_pair <= self.max_pair < self.upper


def pair_sums(psi: np.ndarray) -> np.ndarray:
    sq = psi * psi
    return sq[:-1] + sq[1:]


def eigenvector_delocalization(H: Hamiltonian, mu: float, w: SpectralWindow | None, t: float,
                               tol: float = 1e-12) -> DelocalizationReport:
    if not t > 0:
        raise ValueError("t must be positive")
    psi = inverse_iteration(H, mu, tol)
    s = pair_sums(psi)
    n = H.n
    return DelocalizationReport(mu=float(mu), t=float(t), min_pair=float(s.min()), max_pair=float(s.max()),
                                lower=2.0 / ((n + 1) * t * t), upper=2.0 * t * t / (n + 1),
                                norm=float(psi @ psi))


def _cpow(z: complex, k: int) -> complex:
    out = complex(1.0, 0.0)
    base = z
    while k:
        if k & 1:
            out *= base
        base *= base
        k >>= 1
    return out


def shift_theta(E: float, n: int) -> float:
    """arg(z^(2n+2)) + pi with the principal argument in (-pi, pi]."""
    w = _cpow(bulk_z(E), 2 * n + 2)
    a = math.atan2(w.imag, w.real)
    if a <= -math.pi + 1e-12:
        a = math.pi
    return a + math.pi


def limit_shift(E: float, n: int) -> float:
    """arg(z^(2n+2)) in [0, 2 pi): the offset that makes shifted counts converge to Sch_tau.

    Eigenvalues solve phi^{lambda/tau}(tau) = arg(z^(2n+2)) mod 2 pi in the limit,
    so this differs from ``shift_theta`` by pi.
    """
    return math.fmod(shift_theta(E, n) + math.pi, 2.0 * math.pi)


@dataclass(frozen=True)
class ScaledConfiguration:
    points: np.ndarray
    shift: float
    n: int
    E: float
    unshifted: np.ndarray = field(repr=False, default=None)


def rescale(eigs, E: float, n: int) -> np.ndarray:
    return density_rho(E) * n * (np.asarray(eigs, dtype=float) - E)


def rescale_and_shift(eigs, w: SpectralWindow, n: int) -> ScaledConfiguration:
    lam = rescale(eigs, w.E, n)
    theta = shift_theta(w.E, n)
    return ScaledConfiguration(points=np.sort(lam - theta), shift=theta, n=n, E=w.E, unshifted=np.sort(lam))


def scaled_counts(diagonals: np.ndarray, E: float, a: float, b: float, shift: float = 0.0) -> np.ndarray:
    """Number of shifted rescaled eigenvalues in [a, b] for each diagonal row."""
    diagonals = np.atleast_2d(diagonals)
    n = diagonals.shape[1]
    scale = density_rho(E) * n
    lo = E + (a + shift) / scale
    hi = E + (b + shift) / scale
    B = diagonals.shape[0]
    return closed_count(diagonals, np.full(B, lo), np.full(B, hi))

"""Statistics of sampled point processes and their reference values."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

from ..operator_model import PotentialSpec
from ..randomness import OmegaKind
from .kolmogorov import count_tail_probability
from .sampling import PointSample

TWO_PI = 2.0 * math.pi


def _plain(x):
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class StatReport:
    """Estimate(s) with standard errors against a reference value, plus a verdict."""

    name: str
    estimate: Any
    stderr: Any
    n: int
    reference: Any = None
    statistic: Any = None
    p_value: Any = None
    verdict: bool | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample size must be recorded")
        parts = self.stderr.values() if isinstance(self.stderr, dict) else [self.stderr]
        for part in parts:
            se = np.asarray(part, dtype=float)
            if np.any(se[np.isfinite(se)] < 0):
                raise ValueError("standard errors must be non-negative")

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self, path=None) -> str:
        s = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(s + "\n")
        return s

    @classmethod
    def from_json(cls, text: str) -> "StatReport":
        return cls(**json.loads(text))


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def var_se(x) -> tuple[float, float]:
    """Sample variance with the large-sample standard error sqrt((m4 - s^4)/n)."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    s2 = float(np.mean(d * d) * len(x) / (len(x) - 1))
    m4 = float(np.mean(d ** 4))
    return s2, math.sqrt(max(m4 - s2 * s2, 0.0) / len(x))


def within(est, ref, se, k: float = 3.0) -> bool:
    return bool(abs(est - ref) <= k * se)


# --- intensity --------------------------------------------------------------

def theta_density(x, tau: float, kmax: int | None = None) -> np.ndarray:
    """2 pi-periodized Normal(0, 3 tau / 2) density."""
    x = np.asarray(x, dtype=float)
    s = math.sqrt(1.5 * tau)
    if kmax is None:
        kmax = int(math.ceil(10 * s / TWO_PI)) + 2
    k = np.arange(-kmax, kmax + 1)
    return stats.norm.pdf(x[..., None] + TWO_PI * k, scale=s).sum(axis=-1)


def theta_cell_mass(edges, tau: float, kmax: int | None = None) -> np.ndarray:
    """Integral of the theta density over consecutive cells of [0, 2 pi]."""
    edges = np.asarray(edges, dtype=float)
    s = math.sqrt(1.5 * tau)
    if kmax is None:
        kmax = int(math.ceil(10 * s / TWO_PI)) + 2
    k = np.arange(-kmax, kmax + 1)
    cdf = stats.norm.cdf(edges[:, None] + TWO_PI * k, scale=s).sum(axis=1)
    return np.diff(cdf)


def _points_and_count(samples) -> tuple[np.ndarray, int]:
    if isinstance(samples, (list, tuple)) and samples and isinstance(samples[0], PointSample):
        return np.concatenate([s.points for s in samples]), len(samples)
    raise TypeError("expected a list of PointSample")


def intensity_report(tau: float, samples: Sequence[PointSample], bins: int = 24, alpha: float = 1e-3) -> StatReport:
    """Points of [0, 2 pi) windows, reduced mod 2 pi, against the theta density.

    The Pearson statistic sum (O - E)^2 / E uses the Poisson variance as the
    reference; strong repulsion makes cell counts sub-Poisson, so the
    chi^2(bins) reference is conservative.
    """
    if bins < 16:
        raise ValueError("need at least 16 bins")
    if len(samples) < 1000:
        raise ValueError("intensity report needs at least 1000 samples")
    for s in samples:
        if s.window[1] - s.window[0] < TWO_PI - 1e-12:
            raise ValueError("each sample must cover a full period")
    pts, n = _points_and_count(samples)
    per = np.array([np.sum((s.points >= s.window[0]) & (s.points < s.window[0] + TWO_PI)) for s in samples])
    edges = np.linspace(0.0, TWO_PI, bins + 1)
    # points of the first period only, to match the per-sample window
    x1 = np.concatenate([np.mod(s.points[(s.points >= s.window[0]) & (s.points < s.window[0] + TWO_PI)], TWO_PI)
                         for s in samples])
    obs = np.histogram(x1, edges)[0]
    exp = n * theta_cell_mass(edges, tau)
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    p = float(stats.chi2.sf(chi2, bins))
    m, se = mean_se(per)
    ok = p > alpha and within(m, 1.0, se)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return StatReport("intensity", estimate={"mean_per_period": m}, stderr={"mean_per_period": se}, n=n,
                      reference={"mean_per_period": 1.0, "density": "theta(3 tau/2)"}, statistic=chi2,
                      p_value=p, verdict=ok,
                      details={"tau": tau, "bins": bins, "observed": obs, "expected": exp,
                               "bin_centers": centers, "empirical_density": obs / (n * np.diff(edges)),
                               "all_points": int(len(pts))})


# --- gaps ---------------------------------------------------------------------

def zero_event_upper(n: int, alpha: float = 1e-3) -> float:
    """One-sided (1 - alpha) upper confidence bound for p when 0 of n events occur."""
    return 1.0 - alpha ** (1.0 / n)


def gap_report(tau: float, lambda_values: Sequence[float], empty: np.ndarray, band=(0.5, 1.8),
               alpha: float = 1e-3) -> StatReport:
    """P(Sch_tau[0, lambda] = 0) per lambda from indicator columns ``empty`` (n, L).

    Zero observed events give a one-sided upper bound on P, hence a lower
    bound on the log ratio; the verdict then only requires that lower bound
    not to exceed the band.
    """
    lam = np.asarray(lambda_values, dtype=float)
    e = np.asarray(empty, dtype=bool).reshape(-1, len(lam))
    n = e.shape[0]
    k = e.sum(axis=0)
    p = k / n
    se = np.sqrt(np.maximum(p * (1 - p), 0) / n)
    rate = lam ** 2 / (4 * tau)
    ratio, ratio_se, kind = [], [], []
    for pi, si, ki, ri in zip(p, se, k, rate):
        if ri == 0:
            ratio.append(float("nan"))
            ratio_se.append(float("nan"))
            kind.append("degenerate")
        elif ki == 0:
            ratio.append(-math.log(zero_event_upper(n, alpha)) / ri)
            ratio_se.append(float("nan"))
            kind.append("lower-bound")
        else:
            ratio.append(-math.log(pi) / ri)
            ratio_se.append(si / pi / ri)  # delta method
            kind.append("estimate")
    ok = True
    for r, kd in zip(ratio, kind):
        if kd == "estimate":
            ok &= band[0] <= r <= band[1]
        elif kd == "lower-bound":
            ok &= r <= band[1]
    # strictly decreasing P-hat (monotone event: a gap on [0, l2] is one on [0, l1])
    dec = bool(np.all(np.diff(p) < 0)) if len(p) > 1 else True
    ok = bool(ok and dec)
    # P(N = 0) >= 1 - E N caps the attainable ratio for any sampler with the right intensity
    mass = np.array([theta_cell_mass([0.0, l], tau)[0] if l > 0 else 0.0 for l in lam])
    ceiling = [-math.log(1 - m) / ri if ri > 0 and m < 1 else float("inf") for m, ri in zip(mass, rate)]
    return StatReport("gap", estimate={"P": p, "ratio": ratio}, stderr={"P": se, "ratio": ratio_se}, n=n,
                      reference={"ratio_band": list(band)}, statistic=None, p_value=None, verdict=ok,
                      details={"tau": tau, "lambda": lam, "events": k, "kind": kind, "strictly_decreasing": dec,
                               "expected_count": mass, "ratio_ceiling": ceiling})


# --- repulsion ---------------------------------------------------------------

def repulsion_bounds(tau: float, eps: float) -> dict:
    """The two upper bounds for P(Sch_tau[0, eps] >= 2) and their applicability."""
    b1 = math.log(tau / eps) - tau
    b2 = math.log(TWO_PI / eps) - tau - 1.0
    return {"bound_a": 4.0 * math.exp(-b1 * b1 / tau), "applicable_a": b1 >= 0,
            "bound_b": 4.0 * math.exp(-b2 * b2 / tau), "applicable_b": b2 >= 0}


def log_slope(eps, prob) -> float:
    """Least-squares slope of log P against log eps."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(prob, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def repulsion_report(tau: float, epsilon_values: Sequence[float], counts: np.ndarray,
                     slope_threshold: float = 3.0, pde_kw: dict | None = None) -> StatReport:
    """P(Sch_tau[0, eps] >= 2) per eps from count columns ``counts`` (n, E).

    Monte Carlo estimates are compared with the bounds.  The log-log slope
    uses the backward-equation values of the same probabilities, which stay
    resolvable where Monte Carlo sees no events.
    """
    eps = np.asarray(epsilon_values, dtype=float)
    c = np.asarray(counts).reshape(-1, len(eps))
    n = c.shape[0]
    k = (c >= 2).sum(axis=0)
    p = k / n
    se = np.sqrt(np.maximum(p * (1 - p), 1.0 / n) / n)
    rows, ok = [], True
    for e, pi in zip(eps, p):
        b = repulsion_bounds(tau, e)
        app = [b[f"bound_{s}"] for s in "ab" if b[f"applicable_{s}"]]
        lim = min(app) if app else float("inf")
        holds = bool(pi <= lim)
        ok &= holds
        rows.append({**b, "min_applicable": lim, "holds": holds})
    pde = np.array([count_tail_probability(tau, e, 2, **(pde_kw or {})) for e in eps])
    slope = log_slope(eps, pde) if np.all(pde > 0) and len(eps) > 1 else float("nan")
    ok = bool(ok and slope > slope_threshold)
    return StatReport("repulsion", estimate={"P": p, "P_backward_equation": pde, "slope": slope},
                      stderr={"P": se}, n=n, reference={"bounds": rows, "slope_threshold": slope_threshold},
                      statistic=slope, p_value=None, verdict=ok,
                      details={"tau": tau, "eps": eps, "events": k,
                               "upper_conf_zero_events": zero_event_upper(n)})


# --- central limit theorems ---------------------------------------------------

def covariance_se(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    dx = x - x.mean()
    dy = y - y.mean()
    prod = dx * dy
    c = float(prod.sum() / (len(x) - 1))
    return c, float(prod.std(ddof=1) / math.sqrt(len(x)))


def clt_report(tau: float, lam: float, phi0: np.ndarray, phil: np.ndarray, tol: float = 0.1) -> StatReport:
    """(phi^0(tau), phi^lam(tau) - lam tau) against covariance [[3t/2, t], [t, 3t/2]]."""
    a = np.asarray(phi0, dtype=float).ravel()
    b = np.asarray(phil, dtype=float).ravel() - lam * tau
    n = len(a)
    v0, s0 = var_se(a)
    v1, s1 = var_se(b)
    c, sc = covariance_se(a, b)
    m0, e0 = mean_se(a)
    m1, e1 = mean_se(b)
    ref = np.array([[1.5 * tau, tau], [tau, 1.5 * tau]])
    est = np.array([[v0, c], [c, v1]])
    dev = float(np.max(np.abs(est - ref)))
    ok = dev < tol
    return StatReport("clt", estimate={"mean": [m0, m1], "cov": est}, stderr={"mean": [e0, e1],
                      "cov": [[s0, sc], [sc, s1]]}, n=n, reference={"cov": ref}, statistic=dev,
                      verdict=bool(ok), details={"tau": tau, "lambda": lam, "tolerance": tol,
                                                 "var_phi0_within_3se": within(v0, 1.5 * tau, s0)})


def floor_difference_law(tau: float, theta: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Samples of floor((xi0 + xi2 + theta)/2 pi) - floor((xi0 + xi1)/2 pi)."""
    x0 = rng.normal(0, math.sqrt(tau), size)
    x1 = rng.normal(0, math.sqrt(tau / 2), size)
    x2 = rng.normal(0, math.sqrt(tau / 2), size)
    return (np.floor((x0 + x2 + theta) / TWO_PI) - np.floor((x0 + x1) / TWO_PI)).astype(np.int64)


def sine_beta_clt_report(beta: float, lambda_values: Sequence[float], counts: np.ndarray,
                         rel_tol: float = 0.25) -> StatReport:
    """Var(count - lam/2pi)/log(lam) against 2/(beta pi^2) and mean count against lam/2pi.

    The verdict uses the largest lambda for the variance ratio; the other
    lambdas give the flatness diagnostic.
    """
    lam = np.asarray(lambda_values, dtype=float)
    c = np.asarray(counts, dtype=float).reshape(-1, len(lam))
    n = c.shape[0]
    target = 2.0 / (beta * math.pi ** 2)
    ratios, rses, means, mses = [], [], [], []
    for j, L in enumerate(lam):
        m, ms = mean_se(c[:, j])
        v, vs = var_se(c[:, j] - L / TWO_PI)
        means.append(m)
        mses.append(ms)
        ratios.append(v / math.log(L))
        rses.append(vs / math.log(L))
    r = ratios[-1]
    mean_ok = all(within(m, L / TWO_PI, s) for m, s, L in zip(means, mses, lam))
    ok = abs(r - target) <= rel_tol * target and mean_ok
    flat = float(np.ptp(ratios) / max(np.max(rses), 1e-300)) if len(lam) > 1 else 0.0
    return StatReport("sine_beta_clt", estimate={"var_ratio": ratios, "mean_count": means},
                      stderr={"var_ratio": rses, "mean_count": mses}, n=n,
                      reference={"var_ratio": target, "mean_count": (lam / TWO_PI)}, statistic=r,
                      verdict=bool(ok), details={"beta": beta, "lambda": lam, "rel_tol": rel_tol,
                                                 "spread_in_se": flat})


def density_report(name: str, counts: np.ndarray, expected: float) -> StatReport:
    m, se = mean_se(counts)
    return StatReport(name, estimate=m, stderr=se, n=len(np.ravel(counts)), reference=expected,
                      statistic=(m - expected) / se if se > 0 else 0.0, verdict=within(m, expected, se))


# --- Wegner / Minami -------------------------------------------------------------

def wegner_minami_bounds(n: int, sigma: float, width: float, g_sup: float) -> tuple[float, float]:
    """Bounds on P(>= 1) and P(>= 2) eigenvalues in an energy interval of the given width."""
    w = math.sqrt(n) / sigma * g_sup * width
    m = 0.5 * math.pi ** 2 * n / sigma ** 2 * g_sup ** 2 * width ** 2
    return w, m


def wegner_minami_report(spec: PotentialSpec, windows: Sequence[tuple[float, float]], counts: np.ndarray) -> StatReport:
    """Empirical P(#[mu1, mu2] >= 1), P(>= 2) per energy window against the bounds.

    ``counts`` has shape (instances, windows).  Only disorder with a bounded
    density is accepted.
    """
    kind = OmegaKind(spec.omega)
    if kind is not OmegaKind.GAUSSIAN:
        raise ValueError(f"{kind.value} disorder has no bounded density; the estimates do not apply")
    g = kind.density_sup
    c = np.asarray(counts).reshape(-1, len(windows))
    N = c.shape[0]
    rows, ok = [], True
    for j, (m1, m2) in enumerate(windows):
        w, m = wegner_minami_bounds(spec.n, spec.sigma, m2 - m1, g)
        p1 = float(np.mean(c[:, j] >= 1))
        p2 = float(np.mean(c[:, j] >= 2))
        holds = p1 <= w and p2 <= m
        ok &= holds
        rows.append({"window": [m1, m2], "P1": p1, "bound1": w, "P2": p2, "bound2": m, "holds": holds,
                     "se1": math.sqrt(max(p1 * (1 - p1), 1.0 / N) / N),
                     "se2": math.sqrt(max(p2 * (1 - p2), 1.0 / N) / N)})
    return StatReport("wegner_minami", estimate=[[r["P1"], r["P2"]] for r in rows],
                      stderr=[[r["se1"], r["se2"]] for r in rows], n=N,
                      reference=[[r["bound1"], r["bound2"]] for r in rows], verdict=bool(ok),
                      details={"rows": rows, "n": spec.n, "sigma": spec.sigma, "g_sup": g})


# --- two-sample comparison -------------------------------------------------------

def _pool(expA: np.ndarray, expB: np.ndarray, minimum: float = 5.0) -> list[list[int]]:
    """Merge adjacent count values (from the tails inward) until every pooled
    cell has expected count >= minimum in both samples."""
    groups: list[list[int]] = []
    cur: list[int] = []
    ea = eb = 0.0
    for i in range(len(expA)):
        cur.append(i)
        ea += expA[i]
        eb += expB[i]
        if ea >= minimum and eb >= minimum:
            groups.append(cur)
            cur, ea, eb = [], 0.0, 0.0
    if cur:
        if not groups:
            groups.append(cur)
        else:
            groups[-1].extend(cur)
    return groups


def compare_distributions(a, b, name: str = "compare", alpha: float = 1e-3, min_expected: float = 5.0) -> StatReport:
    """Two-sample pooled chi^2 and KS distance for integer count samples."""
    a = np.asarray(a).ravel().astype(np.int64)
    b = np.asarray(b).ravel().astype(np.int64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample")
    lo = int(min(a.min(), b.min()))
    hi = int(max(a.max(), b.max()))
    vals = np.arange(lo, hi + 1)
    ca = np.bincount(a - lo, minlength=len(vals)).astype(float)
    cb = np.bincount(b - lo, minlength=len(vals)).astype(float)
    na, nb = len(a), len(b)
    pooled = (ca + cb) / (na + nb)
    groups = _pool(pooled * na, pooled * nb, min_expected)
    ga = np.array([ca[g].sum() for g in groups])
    gb = np.array([cb[g].sum() for g in groups])
    ea = np.array([pooled[g].sum() for g in groups])
    if np.any(ea * min(na, nb) < min_expected):
        raise ValueError("samples too small for the chi^2 approximation after pooling")
    if len(groups) > 1:
        chi2, p, dof, _ = stats.chi2_contingency(np.vstack([ga, gb]), correction=False)
    else:
        chi2, p, dof = 0.0, 1.0, 0
    Fa = np.cumsum(ca) / na
    Fb = np.cumsum(cb) / nb
    ks = float(np.max(np.abs(Fa - Fb)))
    return StatReport(name, estimate={"ks_distance": ks, "mean_a": float(a.mean()), "mean_b": float(b.mean())},
                      stderr={"mean_a": float(a.std(ddof=1) / math.sqrt(na)) if na > 1 else 0.0,
                              "mean_b": float(b.std(ddof=1) / math.sqrt(nb)) if nb > 1 else 0.0},
                      n=int(na + nb), reference=None, statistic=float(chi2), p_value=float(p),
                      verdict=bool(p > alpha),
                      details={"dof": int(dof), "cells": len(groups), "values": vals, "counts_a": ca,
                               "counts_b": cb, "n_a": na, "n_b": nb})


def ks_two_sample(x, y, name: str = "ks", alpha: float = 1e-2) -> StatReport:
    """Continuous two-sample KS (scipy) with the mean difference as the estimate."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    r = stats.ks_2samp(x, y)
    return StatReport(name, estimate={"mean_x": float(x.mean()), "mean_y": float(y.mean())},
                      stderr={"mean_x": float(x.std(ddof=1) / math.sqrt(len(x))),
                              "mean_y": float(y.std(ddof=1) / math.sqrt(len(y)))},
                      n=len(x) + len(y), statistic=float(r.statistic), p_value=float(r.pvalue),
                      verdict=bool(r.pvalue > alpha))

"""Gnuplot-ready data files derived from runs and reports."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from ..operator_model import PotentialSpec, build_hamiltonian
from ..point_process import theta_density
from ..randomness import SeedSpec, make_tape
from ..sde import integrate_phase_family, steps_for
from ..transfer import evolve_chain


def _save(path: Path, cols: Sequence[np.ndarray], header: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.column_stack(cols), delimiter=" ", header=header, fmt="%.10g")
    return path


def phase_surface(out: str | os.PathLike, master_seed: int = 0, stream: int = 0, nt: int = 100,
                  lambdas: Sequence[float] | None = None, T: float = 1.0, dt: float = 1e-3) -> Path:
    """phi^lambda(t) of one tape on an nt x len(lambdas) grid; columns t, lambda, phi."""
    lam = np.linspace(-20.0, 20.0, 81) if lambdas is None else np.asarray(lambdas, dtype=float)
    steps, h = steps_for(T, dt)
    if steps % nt:
        raise ValueError(f"{steps} steps cannot be recorded on {nt} equally spaced times")
    tape = make_tape(SeedSpec(master_seed, stream), h, steps, ("B", "B2", "B3"))
    fam = integrate_phase_family("critical", lam, T, tape, record_every=steps // nt)
    t = fam.times[1:]
    vals = fam.values[:, 1:]  # (L, nt)
    Tg, Lg = np.meshgrid(t, lam, indexing="ij")
    return _save(Path(out), [Tg.ravel(), Lg.ravel(), vals.T.ravel()], "t lambda phi")


def q_trace(out: str | os.PathLike, E: float = 1.0, lam: float = 25.0, n: int = 10_000, sigma: float = 1.0,
            master_seed: int = 0, stream: int = 0) -> Path:
    """First-row entries of Q_ell^lambda along one critical chain; columns ell, Q11, Q12."""
    H = build_hamiltonian(PotentialSpec("critical", sigma, n), SeedSpec(master_seed, stream))
    chain = evolve_chain(E, H.diagonal, lam)
    Q = np.real(chain.Q)
    return _save(Path(out), [np.arange(n + 1), Q[:, 0, 0], Q[:, 0, 1]], "ell Q11 Q12")


def intensity_files(report: dict, out_dir: str | os.PathLike) -> list[Path]:
    """Empirical density per bin and the analytic theta density on a fine grid."""
    d = report["details"]
    out_dir = Path(out_dir)
    a = _save(out_dir / "intensity_empirical.dat", [np.asarray(d["bin_centers"]),
                                                    np.asarray(d["empirical_density"])], "lambda density")
    x = np.linspace(0.0, 2.0 * math.pi, 400)
    b = _save(out_dir / "intensity_theta.dat", [x, theta_density(x, d["tau"])], "lambda theta_density")
    return [a, b]


def emit_plot_data(paths: Sequence[str | os.PathLike], out_dir: str | os.PathLike) -> list[Path]:
    """Convert run directories or report JSON files into plot data files.

    Reports without a dedicated export produce one two-column file of their
    scalar estimates.  Missing inputs are named in the error.
    """
    paths = [Path(p) for p in paths]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError("missing inputs: " + ", ".join(missing))
    reports = []
    for p in paths:
        if p.is_dir():
            found = sorted((p / "reports").glob("*.json"))
            if not found:
                raise FileNotFoundError(f"missing inputs: no reports under {p}")
            reports += found
        else:
            reports.append(p)
    out_dir = Path(out_dir)
    written = []
    for rp in reports:
        rep = json.loads(rp.read_text())
        if rep.get("name") == "intensity":
            written += intensity_files(rep, out_dir)
            continue
        est = rep.get("estimate")
        flat = est if isinstance(est, dict) else {"estimate": est}
        rows = [(k, v) for k, v in flat.items() if isinstance(v, (int, float))]
        path = out_dir / f"{rep.get('name', rp.stem)}.dat"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("# key value\n" + "".join(f"{k} {v!r}\n" for k, v in rows))
        written.append(path)
    return written

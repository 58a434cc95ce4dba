"""Command line entry point: ``randschro <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..point_process import compare_distributions
from .config import ConfigError, _literal, from_mapping, load_config
from .experiments import EXPERIMENTS
from .plots import emit_plot_data, phase_surface, q_trace
from .runner import ExperimentError, RunManifest, replay, run_experiment

FAMILIES = ("simulate-operator", "simulate-sde", "sample-sch", "sample-sineb", "carousel")


def _overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(item, "expected key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = _literal(v)
    return out


def _config(args):
    over = _overrides(args.set)
    for key in ("paths", "dt", "master_seed", "workers", "chunk"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    over["experiment"] = args.experiment
    if args.config:
        return load_config(args.config, over)
    return from_mapping(over)


def _print_reports(result) -> None:
    m = result.manifest
    print(f"{m.experiment}  hash={m.config_hash}  wall={m.wall_clock_s:.1f}s")
    for r in result.reports:
        v = "info" if r.verdict is None else ("PASS" if r.verdict else "FAIL")
        print(f"  [{v}] {r.name}: statistic={r.statistic!r} p={r.p_value!r}")
    if m.timing.get("within_budget") is False:
        print(f"  [warn] runtime {m.wall_clock_s:.0f}s exceeds budget {m.timing['budget_s']:.0f}s")
    print("PASSED" if m.passed else "FAILED")


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.family != "run" and EXPERIMENTS[cfg.experiment].family != args.family:
        raise ConfigError("experiment", f"{cfg.experiment!r} is not a {args.family} experiment")
    out = args.out or str(Path(cfg.out) / cfg.experiment)

    def progress(task, done, total):
        if args.verbose:
            print(f"  {task.task_id} ({done}/{total})", file=sys.stderr)

    result = run_experiment(cfg, out, progress)
    _print_reports(result)
    print(f"outputs in {out}")
    return 0 if result.manifest.passed else 1


def _read_counts(path: str) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    col = "count" if "count" in names else names[-1]
    return np.asarray(data[col], dtype=np.int64)


def cmd_compare(args) -> int:
    rep = compare_distributions(_read_counts(args.a), _read_counts(args.b), "compare", alpha=args.alpha)
    print(rep.to_json())
    return 0 if rep.verdict else 1


def cmd_report(args) -> int:
    man = RunManifest.read(args.run_dir)
    print(json.dumps({k: man.to_dict()[k] for k in ("experiment", "config_hash", "verdicts", "passed",
                                                    "wall_clock_s", "timing")}, indent=2))
    if args.plot_dir:
        for p in emit_plot_data([args.run_dir], args.plot_dir):
            print(f"wrote {p}")
    return 0 if man.passed else 1


def cmd_replay(args) -> int:
    out, same = replay(args.run_dir, args.task_id, _overrides(args.set))
    print(json.dumps({k: np.asarray(v).shape for k, v in out.items()}))
    print("digest matches the recorded run" if same else "digest differs from the recorded run")
    return 0 if same else 1


def cmd_plot(args) -> int:
    out = Path(args.out)
    if args.kind == "phase-surface":
        p = phase_surface(out, master_seed=args.master_seed)
    else:
        p = q_trace(out, master_seed=args.master_seed)
    print(f"wrote {p}")
    return 0


def cmd_list(args) -> int:
    for name, e in sorted(EXPERIMENTS.items()):
        crit = f"C{e.criterion}" if e.criterion else "--"
        print(f"{name:26s} {crit:4s} {e.family:18s} {e.summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randschro", description="Experiments for critical 1D random Schrödinger operators")
    sub = p.add_subparsers(dest="command", required=True)

    for fam in ("run",) + FAMILIES:
        names = sorted(n for n, e in EXPERIMENTS.items() if fam == "run" or e.family == fam)
        s = sub.add_parser(fam, help=f"run a{'n' if fam == 'run' else ''} {'' if fam == 'run' else fam + ' '}experiment")
        s.add_argument("experiment", choices=names)
        s.add_argument("--config", help="key = value file")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        s.add_argument("--paths", type=int)
        s.add_argument("--dt", type=float)
        s.add_argument("--master-seed", dest="master_seed", type=int)
        s.add_argument("--chunk", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out", help="run directory (default: <out>/<experiment>)")
        s.add_argument("-v", "--verbose", action="store_true")
        s.set_defaults(func=cmd_run, family=fam)

    s = sub.add_parser("compare", help="two-sample comparison of count CSV files")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--alpha", type=float, default=1e-3)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("report", help="summarize a run directory and optionally emit plot data")
    s.add_argument("run_dir")
    s.add_argument("--plot-dir")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("replay", help="re-execute one task of a recorded run")
    s.add_argument("run_dir")
    s.add_argument("task_id")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("plot", help="standalone plot data (phase surface or Q trace)")
    s.add_argument("kind", choices=("phase-surface", "q-trace"))
    s.add_argument("--out", required=True)
    s.add_argument("--master-seed", dest="master_seed", type=int, default=0)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("list", help="list experiments")
    s.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ExperimentError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

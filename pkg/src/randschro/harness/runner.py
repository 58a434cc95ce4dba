"""Experiment execution, manifests and single-task replay."""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from ..point_process import StatReport
from .config import ExperimentConfig, dump_config, from_mapping
from .experiments import EXPERIMENTS, Context, Task

MANIFEST = "manifest.json"


class ExperimentError(RuntimeError):
    def __init__(self, message: str, task: dict | None = None):
        super().__init__(message)
        self.task = task


def digest(out: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(out):
        a = np.ascontiguousarray(out[k])
        h.update(k.encode())
        h.update(str(a.dtype).encode())
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def _execute(cfg: ExperimentConfig, task: Task) -> dict:
    out = EXPERIMENTS[cfg.experiment].run(cfg, task)
    return {k: np.asarray(v) for k, v in out.items()}


@dataclass
class RunManifest:
    experiment: str
    criterion: int | None
    config: dict
    config_hash: str
    version: str
    reports: list[str]
    verdicts: dict
    passed: bool
    tasks: list[dict]
    wall_clock_s: float = 0.0
    timing: dict = field(default_factory=dict)
    failed_task: dict | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def write(self, run_dir: Path) -> Path:
        p = Path(run_dir) / MANIFEST
        p.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return p

    @classmethod
    def read(cls, run_dir: str | os.PathLike) -> "RunManifest":
        p = Path(run_dir) / MANIFEST
        if not p.exists():
            raise FileNotFoundError(f"no manifest at {p}")
        return cls(**json.loads(p.read_text()))

    def without_timing(self) -> dict:
        d = self.to_dict()
        d.pop("wall_clock_s")
        d.pop("timing")
        return d


@dataclass
class RunResult:
    manifest: RunManifest
    reports: list[StatReport]
    data: dict
    run_dir: Path | None


def _run_tasks(cfg: ExperimentConfig, tasks: list[Task], progress: Callable | None):
    outs: list[dict | None] = [None] * len(tasks)
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(_execute, cfg, t) for t in tasks]
            for i, f in enumerate(futs):
                try:
                    outs[i] = f.result()
                except Exception as exc:  # noqa: BLE001 - re-raised with the task attached
                    for g in futs:
                        g.cancel()
                    return outs, i, exc
                if progress:
                    progress(tasks[i], i + 1, len(tasks))
        return outs, None, None
    for i, t in enumerate(tasks):
        try:
            outs[i] = _execute(cfg, t)
        except Exception as exc:  # noqa: BLE001
            return outs, i, exc
        if progress:
            progress(t, i + 1, len(tasks))
    return outs, None, None


def _gather(tasks: list[Task], outs: list[dict]) -> dict:
    data: dict = {}
    for t, o in zip(tasks, outs):
        arm = data.setdefault(t.arm, {})
        for k, v in o.items():
            arm.setdefault(k, []).append(v)
    return {a: {k: np.concatenate([np.atleast_1d(x) for x in v]) for k, v in d.items()}
            for a, d in data.items()}


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None,
                   progress: Callable | None = None) -> RunResult:
    """Run every task of the experiment, reduce to reports and write the run directory.

    With ``out_dir=None`` nothing is written (reports are returned only).
    """
    exp = EXPERIMENTS[cfg.experiment]
    run_dir = Path(out_dir) if out_dir is not None else None
    if run_dir is not None:
        (run_dir / "reports").mkdir(parents=True, exist_ok=True)
        (run_dir / "config.txt").write_text(dump_config(cfg))
    tasks = exp.tasks(cfg)
    t0 = time.perf_counter()
    outs, failed, exc = _run_tasks(cfg, tasks, progress)
    base = dict(experiment=exp.name, criterion=exp.criterion, config=cfg.as_dict(), config_hash=cfg.hash(),
                version=__version__)
    if failed is not None:
        bad = tasks[failed]
        info = {**bad.as_dict(), "master_seed": cfg.master_seed, "stream_ids": [int(bad.stream_ids()[0]),
                                                                                  int(bad.stream_ids()[-1])],
                "error": f"{type(exc).__name__}: {exc}"}
        if run_dir is not None:
            RunManifest(**base, reports=[], verdicts={}, passed=False,
                        tasks=[{**t.as_dict(), "digest": digest(o)} for t, o in zip(tasks, outs) if o is not None],
                        wall_clock_s=time.perf_counter() - t0, failed_task=info).write(run_dir)
        raise ExperimentError(f"task {bad.task_id} failed: {info['error']}", info) from exc
    data = _gather(tasks, outs)
    ctx = Context(run_dir / "data" if run_dir is not None else None)
    reports = exp.reduce(cfg, data, ctx)
    wall = time.perf_counter() - t0
    names = []
    for r in reports:
        if run_dir is not None:
            r.to_json(run_dir / "reports" / f"{r.name}.json")
        names.append(f"reports/{r.name}.json")
    verdicts = {r.name: r.verdict for r in reports}
    passed = all(v for v in verdicts.values() if v is not None)
    timing = {"budget_s": exp.budget, "within_budget": None if exp.budget is None else wall < exp.budget}
    man = RunManifest(**base, reports=names, verdicts=verdicts, passed=bool(passed),
                      tasks=[{**t.as_dict(), "digest": digest(o)} for t, o in zip(tasks, outs)],
                      wall_clock_s=wall, timing=timing)
    if run_dir is not None:
        man.write(run_dir)
    return RunResult(man, reports, data, run_dir)


def replay(run_dir: str | os.PathLike, task_id: str, overrides: dict | None = None) -> tuple[dict, bool]:
    """Re-execute one task of a recorded run; returns (output, digest matches)."""
    man = RunManifest.read(run_dir)
    d = dict(man.config)
    d.update(overrides or {})
    cfg = from_mapping(d)
    exp = EXPERIMENTS[cfg.experiment]
    tasks = {t.task_id: t for t in exp.tasks(cfg)}
    if task_id not in tasks:
        raise KeyError(f"unknown task id {task_id!r}; known: {', '.join(sorted(tasks)[:8])}...")
    out = _execute(cfg, tasks[task_id])
    recorded = {t["task_id"]: t.get("digest") for t in man.tasks}
    return out, cfg.hash() == man.config_hash and recorded.get(task_id) == digest(out)

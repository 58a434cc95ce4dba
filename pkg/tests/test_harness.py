import json

import numpy as np
import pytest

from randschro.harness import (ACCEPTANCE, EXPERIMENTS, ConfigError, ExperimentError, RunManifest, dump_config,
                               from_mapping, load_config, parse_text, replay, run_experiment)
from randschro.harness.cli import main
from randschro.harness.plots import emit_plot_data, phase_surface, q_trace


def test_registry_covers_all_criteria():
    crit = sorted(EXPERIMENTS[n].criterion for n in ACCEPTANCE)
    assert crit == list(range(1, 16))


def test_config_validation_names_the_key():
    with pytest.raises(ConfigError) as exc:
        from_mapping({"experiment": "c03-phase-marginal", "E": 2.0})
    assert exc.value.key == "E"
    with pytest.raises(ConfigError) as exc:
        from_mapping({"experiment": "c03-phase-marginal", "paths": 2.5})
    assert exc.value.key == "paths"
    with pytest.raises(ConfigError) as exc:
        from_mapping({"experiment": "nope"})
    assert exc.value.key == "experiment"
    with pytest.raises(ConfigError):
        from_mapping({"experiment": "c03-phase-marginal", "window": (3.0, 1.0)})


def test_parse_and_load(tmp_path):
    d = parse_text("experiment = c03-phase-marginal  # comment\npaths = 10\nlambda = 2.5\n\n")
    assert d == {"experiment": "c03-phase-marginal", "paths": 10, "lambda": 2.5}
    with pytest.raises(ConfigError):
        parse_text("paths 10")
    p = tmp_path / "c.txt"
    p.write_text("experiment = c03-phase-marginal\npaths = 10\n")
    cfg = load_config(p, {"dt": 1e-3})
    assert cfg.paths == 10 and cfg.dt == 1e-3 and cfg.get("lambda") == 3.0
    # dump / parse round trip
    again = from_mapping(parse_text(dump_config(cfg)))
    assert again == cfg and again.hash() == cfg.hash()


def test_hash_ignores_scheduling_keys():
    a = from_mapping({"experiment": "c03-phase-marginal", "workers": 1})
    b = from_mapping({"experiment": "c03-phase-marginal", "workers": 4, "out": "elsewhere"})
    c = from_mapping({"experiment": "c03-phase-marginal", "dt": 1e-3})
    assert a.hash() == b.hash() != c.hash()


def test_tasks_partition_the_paths():
    cfg = from_mapping({"experiment": "c03-phase-marginal", "paths": 1000, "chunk": 300})
    tasks = EXPERIMENTS[cfg.experiment].tasks(cfg)
    main_ids = np.concatenate([t.stream_ids() for t in tasks if t.arm == "main"])
    assert np.array_equal(np.sort(main_ids), main_ids) and len(np.unique(main_ids)) == 1000
    assert len({t.task_id for t in tasks}) == len(tasks)


def test_zero_noise_experiment_passes(tmp_path):
    r = run_experiment(from_mapping({"experiment": "c01-zero-noise"}), tmp_path / "run")
    assert r.manifest.passed
    assert (tmp_path / "run" / "manifest.json").exists()
    assert (tmp_path / "run" / "config.txt").exists()


def small(**kw):
    return from_mapping({"experiment": "c03-phase-marginal", "paths": 400, "dt": 1e-3, "chunk": 100, **kw})


def test_determinism(tmp_path):
    a = run_experiment(small(), tmp_path / "a")
    b = run_experiment(small(), tmp_path / "b")
    assert a.manifest.without_timing() == b.manifest.without_timing()
    ra = sorted((tmp_path / "a" / "reports").iterdir())
    rb = sorted((tmp_path / "b" / "reports").iterdir())
    assert [p.read_text() for p in ra] == [p.read_text() for p in rb]


def test_workers_do_not_change_results(tmp_path):
    a = run_experiment(small(), tmp_path / "a")
    b = run_experiment(small(workers=2), tmp_path / "b")
    assert a.manifest.config_hash == b.manifest.config_hash
    assert a.manifest.tasks == b.manifest.tasks
    assert a.manifest.verdicts == b.manifest.verdicts


def test_chunk_size_does_not_change_samples():
    a = run_experiment(small(chunk=400))
    b = run_experiment(small(chunk=75))
    for arm in a.data:
        for k in a.data[arm]:
            assert np.array_equal(a.data[arm][k], b.data[arm][k])


def test_replay(tmp_path):
    run_experiment(small(), tmp_path / "r")
    man = RunManifest.read(tmp_path / "r")
    tid = man.tasks[2]["task_id"]
    out, same = replay(tmp_path / "r", tid, {"workers": 3})
    assert same
    _, same = replay(tmp_path / "r", tid, {"dt": 5e-4})
    assert not same
    with pytest.raises(KeyError):
        replay(tmp_path / "r", "main-9999")
    with pytest.raises(FileNotFoundError):
        replay(tmp_path / "missing", tid)


def test_explosion_replay_reproduces_the_step(tmp_path):
    cfg = from_mapping({"experiment": "logtan-explosion", "epsilon": 6.0, "paths": 200, "chunk": 50, "dt": 1e-3})
    r = run_experiment(cfg, tmp_path / "x")
    steps = r.data["main"]["explosion_step"]
    i = int(np.flatnonzero(steps >= 0)[0])
    task = next(t for t in r.manifest.tasks if t["arm"] == "main" and t["start"] <= i < t["stop"])
    out, same = replay(tmp_path / "x", task["task_id"])
    assert same
    assert out["explosion_step"][i - task["start"]] == steps[i]


def test_failing_task_is_recorded(tmp_path):
    cfg = from_mapping({"experiment": "c10-carousel", "paths": 200, "dt": 0.5})
    with pytest.raises(ExperimentError) as exc:
        run_experiment(cfg, tmp_path / "f")
    info = exc.value.task
    assert info["master_seed"] == cfg.master_seed and "CarouselError" in info["error"]
    man = RunManifest.read(tmp_path / "f")
    assert not man.passed and man.failed_task["task_id"] == info["task_id"]
    assert len(man.failed_task["stream_ids"]) == 2


def test_plot_data(tmp_path):
    p = phase_surface(tmp_path / "phase.dat", master_seed=1)
    rows = np.loadtxt(p)
    assert rows.shape == (8100, 3)
    q = np.loadtxt(q_trace(tmp_path / "q.dat", n=500))
    assert q.shape == (501, 3) and q[0, 1] == 1.0 and q[0, 2] == 0.0
    with pytest.raises(FileNotFoundError, match="missing inputs"):
        emit_plot_data([tmp_path / "nothing"], tmp_path / "plots")


def test_intensity_plot_files(tmp_path):
    cfg = from_mapping({"experiment": "c05-intensity", "paths": 1000, "dt": 1e-2, "chunk": 500})
    run_experiment(cfg, tmp_path / "i")
    written = emit_plot_data([tmp_path / "i"], tmp_path / "plots")
    names = {p.name for p in written}
    assert {"intensity_empirical.dat", "intensity_theta.dat"} <= names
    emp = np.loadtxt(tmp_path / "plots" / "intensity_empirical.dat")
    assert emp.ndim == 2 and emp.shape[1] == 2
    assert (tmp_path / "i" / "data" / "sch_points.csv").exists()


def test_cli(tmp_path, capsys):
    assert main(["list"]) == 0
    assert "c03-phase-marginal" in capsys.readouterr().out
    assert main(["run", "c03-phase-marginal", "--set", "E=2.0", "--out", str(tmp_path / "bad")]) == 2
    assert "E" in capsys.readouterr().err
    assert main(["simulate-operator", "c01-zero-noise", "--out", str(tmp_path / "z")]) == 0
    assert "PASSED" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "z")]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True
    man = RunManifest.read(tmp_path / "z")
    assert main(["replay", str(tmp_path / "z"), man.tasks[0]["task_id"]]) == 0
    assert main(["replay", str(tmp_path / "z"), "nope"]) == 3
    assert main(["report", str(tmp_path / "absent")]) == 3
    assert main(["run", "c10-carousel", "--paths", "200", "--dt", "0.5", "--out", str(tmp_path / "f")]) == 3
    assert main(["plot", "phase-surface", "--out", str(tmp_path / "ps.dat")]) == 0


def test_cli_family_mismatch_and_compare(tmp_path, capsys):
    assert main(["run", "c01-zero-noise", "--out", str(tmp_path / "z")]) == 0
    with pytest.raises(SystemExit):
        main(["sample-sch", "c01-zero-noise"])
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    rng = np.random.default_rng(0)
    for p, lam in ((a, 2.0), (b, 2.0)):
        np.savetxt(p, np.column_stack([np.arange(3000), rng.poisson(lam, 3000)]), delimiter=",",
                   header="sample_id,count", comments="", fmt="%d")
    assert main(["compare", str(a), str(b)]) == 0
    assert '"ks_distance"' in capsys.readouterr().out

"""Acceptance criteria 1-15 at their stated scale and tolerances.

Each criterion runs its registered experiment with default configuration,
so this module takes hours on one core.  One line per criterion is printed
in the terminal summary.  Set ACCEPTANCE_OUT to keep the run directories.
"""

import os

import pytest

from randschro.harness import ACCEPTANCE, EXPERIMENTS, from_mapping, run_experiment

RESULTS: dict[int, str] = {}


def _line(exp, man) -> str:
    stat = "PASS" if man.passed else "FAIL"
    budget = man.timing.get("budget_s")
    if budget is None:
        t = f"{man.wall_clock_s:.1f}s (no budget)"
    else:
        t = f"{man.wall_clock_s:.1f}s / {budget:.0f}s {'ok' if man.timing['within_budget'] else 'OVER'}"
    failed = [k for k, v in man.verdicts.items() if v is False]
    extra = f"  failing: {', '.join(failed)}" if failed else ""
    return f"C{exp.criterion:<2d} {exp.name:24s} {stat}  runtime {t}{extra}"


@pytest.fixture(scope="module")
def out_root(tmp_path_factory):
    root = os.environ.get("ACCEPTANCE_OUT")
    return root if root else str(tmp_path_factory.mktemp("acceptance"))


@pytest.mark.parametrize("name", sorted(ACCEPTANCE, key=lambda n: EXPERIMENTS[n].criterion))
def test_criterion(name, out_root):
    exp = EXPERIMENTS[name]
    result = run_experiment(from_mapping({"experiment": name}), os.path.join(out_root, name))
    man = result.manifest
    line = _line(exp, man)
    RESULTS[exp.criterion] = line
    print(line)
    assert man.passed, line
    if man.timing.get("within_budget") is not None:
        assert man.timing["within_budget"], line

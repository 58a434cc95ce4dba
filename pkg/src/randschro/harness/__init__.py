"""Configuration, orchestration and report emission for the experiment suites."""

from .config import ConfigError, ExperimentConfig, dump_config, from_mapping, load_config, parse_text
from .experiments import ACCEPTANCE, EXPERIMENTS, Experiment, zero_tape_checks
from .runner import ExperimentError, RunManifest, RunResult, replay, run_experiment

"""Convergence-error experiments for the average-reward solvers.

An experiment estimates a reference gain with a long limit-discount run,
then records ``|p0 @ g_ref - estimate_t|`` for each algorithm and iteration.
Results are written as a long-format CSV (one row per measurement), a
per-iteration summary across seeds, and a JSON sidecar with the references.

Config files are JSON objects whose keys are the fields of
``ExperimentConfig``; unknown keys are rejected.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from . import gallery
from .average import ALGORITHMS, algo2_increasing_horizon, algo3_increasing_discount, reference_gain
from .core import RmdpInstance

LONG_COLUMNS = ("instance", "uncertainty", "algorithm", "seed", "iteration", "error", "one_over_T", "one_over_sqrtT")
SUMMARY_COLUMNS = ("instance", "uncertainty", "algorithm", "iteration", "num_seeds", "mean_error", "ci_low", "ci_high")
UNCERTAINTY_KINDS = ("box", "ell2", "singleton")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one convergence-error experiment.

    ``instance`` is a gallery id (``machine``, ``garnet``, ``single_state:0.7``,
    ...) or a path to an instance JSON file. ``num_seeds`` only matters for
    garnet; deterministic instances run once with ``seed = seed_offset``.
    """

    instance: str = "machine"
    uncertainty: str = "box"
    radius: float = 0.05
    num_states: int = 20
    num_actions: int = 5
    branching: int = 10
    T: int = 1000
    T_ref: int = 5000
    num_seeds: int = 25
    seed_offset: int = 0
    output: str = "experiment.csv"
    confidence: float = 0.95
    normalized: bool = True
    algorithms: tuple[str, ...] = ALGORITHMS
    workers: int = 1
    stationarity_window: int = 50
    stationarity_tol: float = 1e-5
    stationarity_statewise: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.algorithms, tuple):
            object.__setattr__(self, "algorithms", tuple(self.algorithms))
        problems = []
        if self.uncertainty not in UNCERTAINTY_KINDS:
            problems.append(f"uncertainty must be one of {', '.join(UNCERTAINTY_KINDS)}")
        if not self.radius > 0:
            problems.append("radius must be positive")
        if not 1 <= self.T < self.T_ref:
            problems.append("need 1 <= T < T_ref")
        if self.num_seeds < 1 or self.workers < 1:
            problems.append("num_seeds and workers must be positive")
        if not 0 < self.confidence < 1:
            problems.append("confidence must lie in (0, 1)")
        if not 1 <= self.stationarity_window <= self.T_ref:
            problems.append("stationarity_window must lie in [1, T_ref]")
        if not self.stationarity_tol > 0:
            problems.append("stationarity_tol must be positive")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms or len(set(self.algorithms)) != len(self.algorithms):
            problems.append(f"algorithms must be distinct entries of {', '.join(ALGORITHMS)}")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - set(names))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = {}
        for key, raw in doc.items():
            default = names[key].default
            if key == "algorithms":
                if isinstance(raw, str) or not isinstance(raw, (list, tuple)):
                    raise ConfigError("algorithms must be a list")
                values[key] = tuple(raw)
            elif isinstance(default, bool):
                if not isinstance(raw, bool):
                    raise ConfigError(f"{key} must be true or false")
                values[key] = raw
            elif isinstance(default, int):
                if isinstance(raw, bool) or not isinstance(raw, int):
                    raise ConfigError(f"{key} must be an integer")
                values[key] = raw
            elif isinstance(default, float):
                if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                    raise ConfigError(f"{key} must be a number")
                values[key] = float(raw)
            else:
                if not isinstance(raw, str):
                    raise ConfigError(f"{key} must be a string")
                values[key] = raw
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with every non-``None`` override applied and re-validated."""
        doc = self.to_dict()
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return type(self).from_dict(doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["algorithms"] = list(self.algorithms)
        return doc

    @property
    def seeds(self) -> tuple[int, ...]:
        count = self.num_seeds if self.is_random else 1
        return tuple(range(self.seed_offset, self.seed_offset + count))

    @property
    def is_random(self) -> bool:
        return self.instance.split(":")[0] == "garnet"

    @property
    def summary_path(self) -> Path:
        out = Path(self.output)
        return out.with_name(f"{out.stem}_summary.csv")

    @property
    def reference_path(self) -> Path:
        out = Path(self.output)
        return out.with_name(f"{out.stem}_reference.json")


def build_instance(config: ExperimentConfig, seed: int) -> RmdpInstance:
    """Nominal instance for one seed with the configured uncertainty attached."""
    name = config.instance
    try:
        if name.endswith(".json"):
            base = RmdpInstance.load(name)
        elif config.is_random:
            _, *args = name.split(":")
            if args:
                raise ConfigError("give garnet sizes through num_states, num_actions and branching")
            base = gallery.garnet(config.num_states, config.num_actions, config.branching, seed)
        elif ":" in name:
            base = gallery.parse_id(name)
        elif name in ("machine", "forest", "healthcare"):
            base = gallery.build(name, config.num_states, normalized=config.normalized)
        else:
            base = gallery.build(name)
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"cannot build instance {name!r}: {exc}") from exc
    # garnet supports rarely satisfy the ell2 containment condition
    return gallery.with_uncertainty(base, config.uncertainty, config.radius, exact_fallback=True)


@dataclass(frozen=True, eq=False)
class SeedRun:
    seed: int
    instance_name: str
    reference: float
    stationarity_spread: float
    errors: dict[str, np.ndarray]
    traces: dict = field(default_factory=dict, repr=False)


def run_seed(config: ExperimentConfig, seed: int, keep_traces: bool = False) -> SeedRun:
    """Reference and per-algorithm errors for a single seed."""
    instance = build_instance(config, seed)
    ref, ref_trace = reference_gain(
        instance,
        config.T_ref,
        config.stationarity_window,
        config.stationarity_tol,
        config.stationarity_statewise,
    )
    tail = ref_trace.estimates[-config.stationarity_window :]
    spread = float(tail.max() - tail.min())
    traces = {}
    for algorithm in config.algorithms:
        if algorithm == "limit-discount":
            # same schedule and warm starts, so the prefix equals a fresh T-step run
            traces[algorithm] = ref_trace.prefix(config.T)
        elif algorithm == "horizon":
            traces[algorithm] = algo2_increasing_horizon(instance, config.T)
        else:
            traces[algorithm] = algo3_increasing_discount(instance, num_iters=config.T)
    errors = {a: tr.errors(ref) for a, tr in traces.items()}
    return SeedRun(seed, instance.name, ref, spread, errors, traces if keep_traces else {})


def _run_seed_job(args) -> SeedRun:
    return run_seed(*args)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    runs: tuple[SeedRun, ...]
    csv_path: Path
    summary_path: Path
    reference_path: Path


def summarize(errors: np.ndarray, confidence: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean and normal-approximation confidence band over axis 0 (seeds)."""
    mean = errors.mean(axis=0)
    n = errors.shape[0]
    if n < 2:
        return mean, mean.copy(), mean.copy()
    z = NormalDist().inv_cdf((1 + confidence) / 2)
    half = z * errors.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, mean - half, mean + half


def run_experiment(config: ExperimentConfig, keep_traces: bool = False) -> ExperimentResult:
    """Run every seed, then write the long CSV, the summary CSV and the reference sidecar.

    Seeds may run in worker processes; results are collected in seed order
    so the output files do not depend on ``workers``.
    """
    jobs = [(config, seed, keep_traces) for seed in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(jobs))) as pool:
            runs = tuple(pool.map(_run_seed_job, jobs))
    else:
        runs = tuple(_run_seed_job(job) for job in jobs)

    csv_path = Path(config.output)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    iterations = np.arange(1, config.T + 1)
    inv = [repr(float(x)) for x in 1.0 / iterations]
    inv_sqrt = [repr(float(x)) for x in 1.0 / np.sqrt(iterations)]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LONG_COLUMNS)
        for algorithm in config.algorithms:
            for run in runs:
                for t, err in enumerate(run.errors[algorithm]):
                    writer.writerow(
                        [config.instance, config.uncertainty, algorithm, run.seed, t + 1, repr(float(err)), inv[t], inv_sqrt[t]]
                    )

    with open(config.summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for algorithm in config.algorithms:
            stacked = np.vstack([run.errors[algorithm] for run in runs])
            mean, low, high = summarize(stacked, config.confidence)
            for t in range(config.T):
                writer.writerow(
                    [
                        config.instance,
                        config.uncertainty,
                        algorithm,
                        t + 1,
                        len(runs),
                        repr(float(mean[t])),
                        repr(float(low[t])),
                        repr(float(high[t])),
                    ]
                )

    sidecar = {
        "config": config.to_dict(),
        "references": [
            {
                "seed": run.seed,
                "instance": run.instance_name,
                "reference_gain": run.reference,
                "stationarity_spread": run.stationarity_spread,
            }
            for run in runs
        ],
    }
    config.reference_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return ExperimentResult(config, runs, csv_path, config.summary_path, config.reference_path)

"""Paired benchmark of all selectors and the train-size x test-size generalization matrix.

Every algorithm in one trial sees the same scenario.  Metrics tables share one
schema::

    algorithm, n_robots, trial, covered, greedy_covered, ratio, runtime_us, seed

Per-size aggregate rows follow the trial rows with ``trial == "mean"`` and an
empty ``seed``.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .features import encode_all
from .imitation import coverage_ratio, gnn_select
from .neural import ModelParams
from .selectors import (
    DEFAULT_OPT_CAP,
    InstanceTooLarge,
    exhaustive_opt,
    greedy_central,
    greedy_decentralized,
    random_assign,
)
from .world import N_PRIMITIVES, ScenarioParams, build_comm_graph, generate_scenario

ALGORITHMS = ("opt", "greedy", "dgreedy", "gnn", "random")
COLUMNS = ("algorithm", "n_robots", "trial", "covered", "greedy_covered", "ratio", "runtime_us", "seed")
MATRIX_COLUMNS = ("train_size", "test_size", "trials", "mean_ratio", "std_ratio")


def trial_seed(master_seed: int, n_robots: int, trial: int, stream: int = 0) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(n_robots, trial, stream))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class BenchConfig:
    sizes: Sequence[int]
    trials: int
    algorithms: Sequence[str] = ALGORITHMS
    master_seed: int = 0
    opt_cap: int = DEFAULT_OPT_CAP
    csv_path: str | Path | None = None
    params: ScenarioParams = field(default_factory=ScenarioParams)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sizes:
            raise ValueError("sizes must not be empty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")


def run_benchmark(cfg: BenchConfig, model: ModelParams | None = None) -> list[dict]:
    if "gnn" in cfg.algorithms and model is None:
        raise ValueError("the gnn algorithm needs a model checkpoint")
    if "opt" in cfg.algorithms:
        too_big = [n for n in cfg.sizes if N_PRIMITIVES**n > cfg.opt_cap]
        if too_big:
            raise InstanceTooLarge(f"opt requested for sizes {too_big} beyond the cap {cfg.opt_cap}")
    rows: list[dict] = []
    for n in cfg.sizes:
        size_rows = []
        for trial in range(cfg.trials):
            seed = trial_seed(cfg.master_seed, n, trial)
            s = generate_scenario(n, cfg.params, seed)
            ref = greedy_central(s)
            results = {}
            for algo in cfg.algorithms:
                if algo == "opt":
                    results[algo] = exhaustive_opt(s, cfg.opt_cap)
                elif algo == "greedy":
                    results[algo] = ref
                elif algo == "dgreedy":
                    results[algo] = greedy_decentralized(s, build_comm_graph(s))
                elif algo == "gnn":
                    results[algo] = gnn_select(model, s, build_comm_graph(s), encode_all(s))
                elif algo == "random":
                    results[algo] = random_assign(s, trial_seed(cfg.master_seed, n, trial, stream=1))
            for algo in cfg.algorithms:
                res = results[algo]
                size_rows.append({
                    "algorithm": algo,
                    "n_robots": n,
                    "trial": trial,
                    "covered": res.value,
                    "greedy_covered": ref.value,
                    "ratio": coverage_ratio(res.value, ref.value),
                    "runtime_us": res.elapsed_us,
                    "seed": seed,
                })
        rows.extend(size_rows)
        rows.extend(aggregate(size_rows, cfg.algorithms))
    if cfg.csv_path is not None:
        write_csv(rows, cfg.csv_path)
    return rows


def aggregate(rows: Sequence[dict], algorithms: Sequence[str]) -> list[dict]:
    out = []
    sizes = sorted({r["n_robots"] for r in rows if r["trial"] != "mean"})
    for n in sizes:
        for algo in algorithms:
            sel = [r for r in rows if r["algorithm"] == algo and r["n_robots"] == n and r["trial"] != "mean"]
            if not sel:
                continue
            out.append({
                "algorithm": algo,
                "n_robots": n,
                "trial": "mean",
                "covered": statistics.fmean(r["covered"] for r in sel),
                "greedy_covered": statistics.fmean(r["greedy_covered"] for r in sel),
                "ratio": statistics.fmean(r["ratio"] for r in sel),
                "runtime_us": statistics.fmean(r["runtime_us"] for r in sel),
                "seed": "",
            })
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Sequence[dict], path, columns: Sequence[str] = COLUMNS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def generalization_matrix(models: Mapping[int, ModelParams | str], test_sizes: Sequence[int], trials: int,
                          master_seed: int = 0, params: ScenarioParams | None = None) -> list[dict]:
    """Mean GNN/greedy coverage ratio for each (training size, test size) pair.

    A model given as the string ``"expert"`` stands for the greedy expert itself.
    Test scenarios depend only on (master_seed, test size, trial), so every row
    of the matrix is evaluated on the same instances.
    """
    params = params or ScenarioParams()
    out = []
    for train_size, model in models.items():
        for n in test_sizes:
            ratios = []
            for trial in range(trials):
                s = generate_scenario(n, params, trial_seed(master_seed, n, trial))
                ref = greedy_central(s)
                if isinstance(model, str):
                    if model != "expert":
                        raise ValueError(f"unknown model placeholder {model!r}")
                    value = ref.value
                else:
                    value = gnn_select(model, s).value
                ratios.append(coverage_ratio(value, ref.value))
            out.append({
                "train_size": train_size,
                "test_size": n,
                "trials": trials,
                "mean_ratio": statistics.fmean(ratios),
                "std_ratio": statistics.pstdev(ratios),
            })
    return out

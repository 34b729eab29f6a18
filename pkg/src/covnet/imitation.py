"""Expert-labelled datasets, the supervised training loop and model evaluation.

Dataset file layout (UTF-8, one JSON document per line)::

    line 1     header  {"format": "covnet-dataset", "version": 1, ...}
    line 2..   record  {"index", "seed", "env_side", "robots", "targets", "neighbors", "labels"}

Records keep raw geometry only; features are recomputed on load.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .features import encode_all
from .neural import (
    ModelConfig,
    ModelParams,
    TrainState,
    cosine_lr,
    cross_entropy_loss,
    gnn_forward,
    init_params,
    loss_and_grad,
    optimizer_step,
)
from .selectors import SelectionResult, greedy_central, random_assign
from .world import CommGraph, Scenario, ScenarioParams, build_comm_graph, generate_scenario, objective

log = logging.getLogger(__name__)

DATASET_FORMAT = "covnet-dataset"
DATASET_VERSION = 1
PRNG_NAME = "numpy.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1, uint64) -> PCG64"
DEFAULT_SPLIT = (0.6, 0.2, 0.2)


def workers_from_env(default: int = 1) -> int:
    value = os.environ.get("COVNET_WORKERS")
    if not value:
        return default
    try:
        n = int(value)
    except ValueError:
        raise ValueError(f"COVNET_WORKERS must be an integer, got {value!r}") from None
    return max(1, n)


def instance_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrainRecord:
    index: int
    seed: int
    scenario: Scenario
    neighbors: tuple[tuple[int, ...], ...]
    labels: tuple[int, ...]

    def to_json(self) -> str:
        s = self.scenario
        doc = {
            "index": self.index,
            "seed": self.seed,
            "env_side": s.env_side,
            "robots": s.robots.tolist(),
            "targets": s.targets.tolist(),
            "neighbors": [list(nb) for nb in self.neighbors],
            "labels": list(self.labels),
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str, params: ScenarioParams) -> "TrainRecord":
        d = json.loads(line)
        s = Scenario(params, np.array(d["robots"], dtype=float), np.array(d["targets"], dtype=float),
                     float(d["env_side"]), d["seed"])
        return cls(d["index"], d["seed"], s, tuple(tuple(nb) for nb in d["neighbors"]), tuple(d["labels"]))


@dataclass(frozen=True)
class DatasetHeader:
    n_robots: int
    n_instances: int
    params: ScenarioParams
    master_seed: int
    split: tuple[float, ...] = DEFAULT_SPLIT
    prng: str = PRNG_NAME
    expert: str = "greedy_central/global"
    version: int = DATASET_VERSION

    def to_json(self) -> str:
        doc = {
            "format": DATASET_FORMAT,
            "version": self.version,
            "generator": {"n_robots": self.n_robots, **self.params.to_dict()},
            "master_seed": self.master_seed,
            "instances": self.n_instances,
            "split": list(self.split),
            "prng": self.prng,
            "expert": self.expert,
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "DatasetHeader":
        d = json.loads(line)
        if d.get("format") != DATASET_FORMAT:
            raise ValueError("not a covnet dataset (bad header)")
        if d.get("version") != DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {d.get('version')!r}")
        gen = dict(d["generator"])
        n_robots = int(gen.pop("n_robots"))
        return cls(n_robots, int(d["instances"]), ScenarioParams.from_dict(gen), int(d["master_seed"]),
                   tuple(d["split"]), d["prng"], d["expert"], d["version"])

    @property
    def expert_variant(self) -> str:
        return self.expert.split("/", 1)[1]


def make_record(n_robots: int, params: ScenarioParams, master_seed: int, index: int,
                expert: str = "global") -> TrainRecord:
    seed = instance_seed(master_seed, index)
    s = generate_scenario(n_robots, params, seed)
    g = build_comm_graph(s)
    labels = greedy_central(s, variant=expert).assignment
    if len(labels) != n_robots or not all(0 <= a < 5 for a in labels):
        raise RuntimeError(f"expert produced an invalid assignment for instance {index}")
    return TrainRecord(index, seed, s, g.neighbors, labels)


def _record_line(args) -> str:
    return make_record(*args).to_json()


def generate_dataset(n_robots: int, n_instances: int, params: ScenarioParams | None, master_seed: int,
                     out, expert: str = "global", workers: int | None = None) -> Path:
    if n_instances < 1:
        raise ValueError("n_instances must be at least 1")
    params = params or ScenarioParams()
    header = DatasetHeader(n_robots, n_instances, params, master_seed, expert=f"greedy_central/{expert}")
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    jobs = [(n_robots, params, master_seed, i, expert) for i in range(n_instances)]
    workers = workers or workers_from_env()
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header.to_json() + "\n")
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                for line in pool.map(_record_line, jobs, chunksize=64):
                    fh.write(line + "\n")
        else:
            for job in jobs:
                fh.write(_record_line(job) + "\n")
    return out


def load_dataset(path) -> tuple[DatasetHeader, list[TrainRecord]]:
    with open(path, encoding="utf-8") as fh:
        header = DatasetHeader.from_json(fh.readline())
        records = [TrainRecord.from_json(line, header.params) for line in fh if line.strip()]
    if len(records) != header.n_instances:
        raise ValueError(f"{path}: header announces {header.n_instances} records, found {len(records)}")
    return header, records


def split(records: Sequence, ratios: Sequence[float] = DEFAULT_SPLIT, seed: int = 0) -> tuple[list, list, list]:
    """Seeded shuffle, then contiguous train/val/test slices."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(records)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise ValueError(f"split of {n} records by {tuple(ratios)} leaves an empty part")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [records[i] for i in order]
    return shuffled[:n_train], shuffled[n_train : n_train + n_val], shuffled[n_train + n_val :]


@dataclass
class TensorSet:
    X: np.ndarray
    S: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.X)

    def take(self, idx) -> "TensorSet":
        return TensorSet(self.X[idx], self.S[idx], self.labels[idx])


def tensorize(records: Sequence[TrainRecord], dtype=np.float32) -> TensorSet:
    """Encode features and shift operators for records sharing one team size."""
    sizes = {r.scenario.n_robots for r in records}
    if len(sizes) != 1:
        raise ValueError(f"records must share one team size, got {sorted(sizes)}")
    X = np.stack([encode_all(r.scenario) for r in records]).astype(dtype)
    S = np.stack([_adjacency(r.neighbors) for r in records]).astype(dtype)
    labels = np.array([r.labels for r in records], dtype=np.int64)
    return TensorSet(X, S, labels)


def _adjacency(neighbors: Sequence[Sequence[int]]) -> np.ndarray:
    n = len(neighbors)
    adj = np.zeros((n, n))
    for i, nb in enumerate(neighbors):
        adj[i, list(nb)] = 1.0
    return adj


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    lr_max: float = 5e-3
    lr_min: float = 1e-6
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    dtype: str = "float32"
    eval_batch: int = 1024


@dataclass
class TrainResult:
    params: ModelParams
    last_params: ModelParams
    history: list[dict]
    steps: int
    best_epoch: int
    diverged: bool = False


def evaluate_loss(params: ModelParams, data: TensorSet, batch: int = 1024) -> tuple[float, float]:
    """Mean cross-entropy and action accuracy over a tensor set."""
    total, correct, count = 0.0, 0, 0
    for lo in range(0, len(data), batch):
        part = data.take(slice(lo, lo + batch))
        logits = gnn_forward(params, part.S, part.X)
        n = part.labels.size
        total += cross_entropy_loss(logits, part.labels) * n
        correct += int((np.argmax(logits, axis=-1) == part.labels).sum())
        count += n
    return total / count, correct / count


def train(train_set: TensorSet, val_set: TensorSet | None, config: TrainConfig | None = None,
          progress: bool = False) -> TrainResult:
    """Mini-batch Adam with a per-step cosine schedule; keeps the best-validation weights."""
    config = config or TrainConfig()
    if train_set.X.shape[-1] != config.model.in_dim:
        raise ValueError(f"feature width {train_set.X.shape[-1]} does not match model input {config.model.in_dim}")
    dtype = np.dtype(config.dtype)
    train_set = TensorSet(train_set.X.astype(dtype), train_set.S.astype(dtype), train_set.labels)
    if val_set is not None:
        val_set = TensorSet(val_set.X.astype(dtype), val_set.S.astype(dtype), val_set.labels)
    params = init_params(config.model, seed=config.seed, dtype=dtype)
    state = TrainState.zeros_like(params)
    rng = np.random.default_rng([config.seed, 1])
    n = len(train_set)
    steps_per_epoch = -(-n // config.batch_size)
    total = config.epochs * steps_per_epoch
    best, best_loss, best_epoch = params, math.inf, -1
    history: list[dict] = []
    diverged = False
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        running, seen = 0.0, 0
        for lo in range(0, n, config.batch_size):
            batch = train_set.take(order[lo : lo + config.batch_size])
            lr = cosine_lr(state.step, total, config.lr_max, config.lr_min)
            try:
                loss, grads = loss_and_grad(params, batch.S, batch.X, batch.labels)
                if not math.isfinite(loss):
                    raise FloatingPointError(f"non-finite loss {loss}")
            except FloatingPointError as exc:
                log.error("training diverged at epoch %d step %d: %s", epoch, state.step, exc)
                diverged = True
                break
            params, state = optimizer_step(params, grads, state, lr)
            running += loss * len(batch)
            seen += len(batch)
        if diverged:
            break
        row = {"epoch": epoch, "train_loss": running / seen, "lr": state.lr}
        if val_set is not None:
            row["val_loss"], row["val_acc"] = evaluate_loss(params, val_set, config.eval_batch)
            score = row["val_loss"]
        else:
            score = row["train_loss"]
        row["seconds"] = time.perf_counter() - t0
        history.append(row)
        if score < best_loss:
            best, best_loss, best_epoch = params, score, epoch
        if progress:
            log.info("epoch %d %s", epoch, {k: round(v, 5) for k, v in row.items() if k != "epoch"})
    best = ModelParams(best.config, best.arrays, config.seed,
                       {"best_epoch": best_epoch, "epochs": config.epochs, "steps": state.step,
                        "batch_size": config.batch_size, "lr_max": config.lr_max, "lr_min": config.lr_min,
                        "train_seed": config.seed, "diverged": diverged})
    return TrainResult(best, params, history, state.step, best_epoch, diverged)


def coverage_ratio(covered: int, reference: int) -> float:
    """covered / reference; an instance where the reference covers nothing counts as 1."""
    return 1.0 if reference == 0 else covered / reference


def gnn_select(params: ModelParams, s: Scenario, g: CommGraph | None = None,
               X: np.ndarray | None = None) -> SelectionResult:
    """Row-argmax of the logits.  Timing covers the forward pass and argmax only."""
    g = g if g is not None else build_comm_graph(s)
    X = encode_all(s) if X is None else X
    S = np.asarray(g.gso, dtype=params.dtype)
    X = np.asarray(X, dtype=params.dtype)
    start = time.perf_counter_ns()
    logits = gnn_forward(params, S, X)
    assignment = np.argmax(logits, axis=-1)
    elapsed = (time.perf_counter_ns() - start) / 1000.0
    assignment = tuple(int(a) for a in assignment)
    return SelectionResult(assignment, objective(s, assignment), 1, elapsed)


@dataclass
class EvalSummary:
    rows: list[dict]
    mean_ratio: float
    std_ratio: float
    random_mean_ratio: float
    mean_runtime_us: float

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "rows"}


def evaluate_model(params: ModelParams, scenarios: Iterable[Scenario], random_seed: int = 0) -> EvalSummary:
    """Coverage of the model's assignment relative to the greedy expert on each scenario."""
    rows = []
    rng = np.random.default_rng(random_seed)
    for trial, s in enumerate(scenarios):
        X = encode_all(s)
        if X.shape[-1] != params.config.in_dim:
            raise ValueError(f"feature width {X.shape[-1]} does not match model input {params.config.in_dim}")
        g = build_comm_graph(s)
        ref = greedy_central(s)
        res = gnn_select(params, s, g, X)
        rnd = random_assign(s, rng)
        rows.append({
            "trial": trial,
            "seed": s.seed,
            "covered": res.value,
            "greedy_covered": ref.value,
            "random_covered": rnd.value,
            "ratio": coverage_ratio(res.value, ref.value),
            "random_ratio": coverage_ratio(rnd.value, ref.value),
            "runtime_us": res.elapsed_us,
        })
    ratios = np.array([r["ratio"] for r in rows])
    return EvalSummary(
        rows,
        float(ratios.mean()),
        float(ratios.std()),
        float(np.mean([r["random_ratio"] for r in rows])),
        float(np.mean([r["runtime_us"] for r in rows])),
    )


def fresh_scenarios(n_robots: int, trials: int, master_seed: int,
                    params: ScenarioParams | None = None) -> list[Scenario]:
    params = params or ScenarioParams()
    return [generate_scenario(n_robots, params, instance_seed(master_seed, i)) for i in range(trials)]

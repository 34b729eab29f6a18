"""Baseline action selectors: greedy (central and 1-hop), exhaustive optimum, random."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .world import (
    N_PRIMITIVES,
    CommGraph,
    Scenario,
    build_comm_graph,
    coverage_bitmasks,
    coverage_matrix,
    objective,
)

DEFAULT_OPT_CAP = 5**10

GREEDY_VARIANTS = ("global", "sequential")


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SelectionResult:
    assignment: tuple[int, ...]
    value: int
    evaluations: int
    elapsed_us: float


def _now_us() -> float:
    return time.perf_counter_ns() / 1000.0


def _greedy_global(masks: list[list[int]]) -> tuple[list[int], int]:
    n = len(masks)
    assignment = [-1] * n
    covered = 0
    evaluations = 0
    for _ in range(n):
        best_gain, best_robot, best_m = -1, -1, -1
        for i in range(n):
            if assignment[i] >= 0:
                continue
            for m, mask in enumerate(masks[i]):
                gain = (mask & ~covered).bit_count()
                evaluations += 1
                # strict > keeps the lowest robot id, then lowest primitive
                if gain > best_gain:
                    best_gain, best_robot, best_m = gain, i, m
        assignment[best_robot] = best_m
        covered |= masks[best_robot][best_m]
    return assignment, evaluations


def _greedy_sequential(masks: list[list[int]], order: Sequence[int] | None = None) -> tuple[list[int], int]:
    n = len(masks)
    assignment = [-1] * n
    covered = 0
    evaluations = 0
    for i in range(n) if order is None else order:
        best_gain, best_m = -1, -1
        for m, mask in enumerate(masks[i]):
            gain = (mask & ~covered).bit_count()
            evaluations += 1
            if gain > best_gain:
                best_gain, best_m = gain, m
        assignment[i] = best_m
        covered |= masks[i][best_m]
    return assignment, evaluations


def greedy_central(s: Scenario, variant: str = "global") -> SelectionResult:
    """Centralized greedy under the one-primitive-per-robot partition constraint.

    ``variant="global"`` repeatedly picks the best (robot, primitive) pair over
    all unassigned robots, ``"sequential"`` lets robots choose in ascending id
    order.  Both are 1/2-approximations of the optimum.
    """
    if variant not in GREEDY_VARIANTS:
        raise ValueError(f"unknown greedy variant {variant!r}; expected one of {GREEDY_VARIANTS}")
    start = _now_us()
    masks = coverage_bitmasks(s)
    if variant == "global":
        assignment, evaluations = _greedy_global(masks)
    else:
        assignment, evaluations = _greedy_sequential(masks)
    elapsed = _now_us() - start
    return SelectionResult(tuple(assignment), objective(s, assignment), evaluations, elapsed)


def greedy_decentralized(s: Scenario, g: CommGraph | None = None) -> SelectionResult:
    """Every robot runs sequential greedy over itself and its 1-hop neighbours.

    Each local run only sees a sub-scenario holding the subteam's robots and the
    targets they can cover, so no information beyond one hop can leak in.  The
    reported time is the slowest robot's local run.
    """
    g = g if g is not None else build_comm_graph(s)
    assignment = [-1] * s.n_robots
    evaluations = 0
    slowest = 0.0
    for i in range(s.n_robots):
        start = _now_us()
        team = sorted({i, *g.neighbors[i]})
        cov = coverage_matrix(s.subscenario(team))
        # keep only the targets this subteam can reach
        packed = np.packbits(cov[:, :, cov.any(axis=(0, 1))], axis=-1, bitorder="little")
        masks = [[int.from_bytes(row.tobytes(), "little") for row in robot] for robot in packed]
        local_assignment, evals = _greedy_sequential(masks)
        assignment[i] = local_assignment[team.index(i)]
        evaluations += evals
        slowest = max(slowest, _now_us() - start)
    return SelectionResult(tuple(assignment), objective(s, assignment), evaluations, slowest)


def _packed_coverage(s: Scenario) -> np.ndarray:
    """(N, 5, W) uint64 words of the coverage bitsets."""
    cov = coverage_matrix(s)
    n_words = max(1, -(-s.n_targets // 64))
    padded = np.zeros(cov.shape[:2] + (n_words * 64,), dtype=bool)
    padded[:, :, : s.n_targets] = cov
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64)


def _union_table(words: np.ndarray) -> np.ndarray:
    """Unions for every joint choice of the given robots, in lexicographic order."""
    table = np.zeros((1, words.shape[-1]), dtype=np.uint64)
    for robot_words in words:
        table = (table[:, None, :] | robot_words[None, :, :]).reshape(-1, words.shape[-1])
    return table


def exhaustive_opt(s: Scenario, cap: int = DEFAULT_OPT_CAP, chunk_elems: int = 1 << 22) -> SelectionResult:
    """Exact maximizer by enumerating all 5^N joint assignments.

    The team is split in two halves whose union tables are combined block by
    block, so every assignment is scored once.  Ties go to the
    lexicographically smallest assignment.
    """
    n = s.n_robots
    total = N_PRIMITIVES**n
    if total > cap:
        raise InstanceTooLarge(f"instance too large: 5^{n} = {total} assignments exceeds cap {cap}")
    start = _now_us()
    if n == 0:
        return SelectionResult((), 0, 1, _now_us() - start)
    words = _packed_coverage(s)
    head = n // 2
    prefix = _union_table(words[:head])
    suffix = _union_table(words[head:])
    rows = max(1, chunk_elems // (suffix.shape[0] * suffix.shape[1]))
    best_value, best_index = -1, -1
    for lo in range(0, prefix.shape[0], rows):
        block = prefix[lo : lo + rows, None, :] | suffix[None, :, :]
        counts = np.bitwise_count(block).sum(axis=-1, dtype=np.int64)
        flat = int(np.argmax(counts))
        value = int(counts.flat[flat])
        if value > best_value:
            best_value = value
            best_index = lo * suffix.shape[0] + flat
    digits = []
    for _ in range(n):
        best_index, d = divmod(best_index, N_PRIMITIVES)
        digits.append(d)
    assignment = tuple(reversed(digits))
    elapsed = _now_us() - start
    return SelectionResult(assignment, best_value, total, elapsed)


def random_assign(s: Scenario, seed: int | np.random.Generator = 0) -> SelectionResult:
    start = _now_us()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    assignment = tuple(int(m) for m in rng.integers(0, N_PRIMITIVES, size=s.n_robots))
    elapsed = _now_us() - start
    return SelectionResult(assignment, objective(s, assignment), 0, elapsed)

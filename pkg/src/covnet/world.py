"""Scenario geometry: robots, targets, motion primitives and the coverage objective.

Everything here is a pure function of an immutable :class:`Scenario`.  Target
coverage is precomputed per (robot, primitive) as a Python integer bitmask so
that unions and marginal gains reduce to ``|`` and ``int.bit_count``.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

BASE_ROBOTS = 20
BASE_SIDE = 100


class MotionPrimitive(enum.IntEnum):
    FORWARD = 0
    BACKWARD = 1
    LEFT = 2
    RIGHT = 3
    IDLE = 4

    @property
    def direction(self) -> tuple[float, float]:
        return _DIRECTIONS[self]

    def travel(self, params: "ScenarioParams") -> float:
        return 0.0 if self is MotionPrimitive.IDLE else params.travel


_DIRECTIONS = {
    MotionPrimitive.FORWARD: (0.0, 1.0),
    MotionPrimitive.BACKWARD: (0.0, -1.0),
    MotionPrimitive.LEFT: (-1.0, 0.0),
    MotionPrimitive.RIGHT: (1.0, 0.0),
    MotionPrimitive.IDLE: (0.0, 0.0),
}

PRIMITIVES: tuple[MotionPrimitive, ...] = tuple(MotionPrimitive)
N_PRIMITIVES = len(PRIMITIVES)


@dataclass(frozen=True)
class ScenarioParams:
    sensing_range: float = 20.0
    comm_range: float = 10.0
    fov: float = 6.0
    travel: float = 20.0
    density: float = 0.025

    def __post_init__(self):
        for name in ("sensing_range", "comm_range", "fov", "travel", "density"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.density >= 1:
            raise ValueError(f"density must lie in (0, 1), got {self.density!r}")

    def to_dict(self) -> dict:
        return {
            "sensing_range": self.sensing_range,
            "comm_range": self.comm_range,
            "fov": self.fov,
            "travel": self.travel,
            "density": self.density,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioParams":
        return cls(**{k: float(d[k]) for k in ("sensing_range", "comm_range", "fov", "travel", "density")})


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = points[:, 0], points[:, 1]
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True, eq=False)
class Scenario:
    """One snapshot of the team.  Robot ``i`` is row ``i`` of ``robots``."""

    params: ScenarioParams
    robots: np.ndarray
    targets: np.ndarray
    env_side: float
    seed: int | None = None
    _masks: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        robots = np.asarray(self.robots, dtype=float).reshape(-1, 2)
        targets = np.asarray(self.targets, dtype=float).reshape(-1, 2)
        if not (np.all(np.isfinite(robots)) and np.all(np.isfinite(targets))):
            raise ValueError("positions must be finite")
        robots.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "robots", robots)
        object.__setattr__(self, "targets", targets)

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def check_robot(self, robot: int) -> int:
        if not (0 <= int(robot) < self.n_robots) or int(robot) != robot:
            raise IndexError(f"robot id {robot!r} out of range for {self.n_robots} robots")
        return int(robot)

    def coverage_masks(self) -> list[list[int]]:
        """``masks[i][m]`` is the bitmask of targets covered by robot i under primitive m."""
        if self._masks is None:
            object.__setattr__(self, "_masks", coverage_bitmasks(self))
        return self._masks

    def subscenario(self, robot_ids: Sequence[int], target_ids: Sequence[int] | None = None) -> "Scenario":
        """Restriction to a subset of robots (and optionally targets), ids renumbered in the given order."""
        robots = self.robots[list(robot_ids)]
        targets = self.targets if target_ids is None else self.targets[list(target_ids)]
        return Scenario(self.params, robots, targets, self.env_side, self.seed)


@dataclass(frozen=True)
class CommGraph:
    adjacency: np.ndarray
    neighbors: tuple[tuple[int, ...], ...]
    weights: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.neighbors)

    @property
    def gso(self) -> np.ndarray:
        """Graph shift operator: adjacency scaled by edge weights when present."""
        if self.weights is None:
            return self.adjacency
        return self.adjacency * self.weights

    @property
    def n_directed_edges(self) -> int:
        return sum(len(nb) for nb in self.neighbors)


@dataclass(frozen=True)
class Observation:
    robot: int
    robot_ids: np.ndarray
    robot_rel: np.ndarray
    target_ids: np.ndarray
    target_rel: np.ndarray


def env_side_for(n_robots: int) -> int:
    """Side of the square environment: area grows linearly with the team size."""
    return int(round(math.sqrt(BASE_SIDE * BASE_SIDE * n_robots / BASE_ROBOTS)))


def generate_scenario(n_robots: int, params: ScenarioParams | None = None, seed: int = 0) -> Scenario:
    """Uniform robots and targets on distinct unit cells of a square environment.

    Robots are drawn first, then the target cells, from one PCG64 stream seeded
    with ``seed``; the same arguments always produce the same scenario.
    """
    params = params or ScenarioParams()
    if n_robots < 1:
        raise ValueError("n_robots must be at least 1")
    side = env_side_for(n_robots)
    n_cells = side * side
    n_targets = int(round(params.density * n_cells))
    if n_targets < 1:
        raise ValueError(f"density {params.density} yields no targets on a {side}x{side} grid")
    rng = np.random.default_rng(seed)
    robots = rng.uniform(0.0, side, size=(n_robots, 2))
    cells = rng.choice(n_cells, size=n_targets, replace=False)
    targets = np.column_stack([cells % side + 0.5, cells // side + 0.5]).astype(float)
    return Scenario(params, robots, targets, float(side), seed)


@functools.lru_cache(maxsize=64)
def _region_offsets(params: ScenarioParams) -> np.ndarray:
    """(5, 4) offsets [x_min, x_max, y_min, y_max] of each primitive's region from the robot."""
    half = params.fov / 2.0
    out = np.empty((N_PRIMITIVES, 4))
    for m in PRIMITIVES:
        dx, dy = m.direction
        ex, ey = dx * m.travel(params), dy * m.travel(params)
        out[m] = (-half + min(ex, 0.0), half + max(ex, 0.0), -half + min(ey, 0.0), half + max(ey, 0.0))
    out.setflags(write=False)
    return out


def coverage_region(pos, m: MotionPrimitive | int, params: ScenarioParams) -> Rect:
    """Field of view swept ``travel`` units along the primitive's direction."""
    off = _region_offsets(params)[MotionPrimitive(m)]
    px, py = float(pos[0]), float(pos[1])
    return Rect(px + off[0], px + off[1], py + off[2], py + off[3])


def _region_bounds(robots: np.ndarray, params: ScenarioParams) -> np.ndarray:
    """(N, 5, 4) array of [x_min, x_max, y_min, y_max] per robot and primitive."""
    return robots[:, None, [0, 0, 1, 1]] + _region_offsets(params)[None]


def coverage_matrix(s: Scenario) -> np.ndarray:
    """Boolean (N, 5, M) array: target j lies in robot i's region for primitive m."""
    b = _region_bounds(s.robots, s.params)[:, :, :, None]
    tx = s.targets[:, 0][None, None, :]
    ty = s.targets[:, 1][None, None, :]
    return (tx >= b[:, :, 0]) & (tx <= b[:, :, 1]) & (ty >= b[:, :, 2]) & (ty <= b[:, :, 3])


def coverage_bitmasks(s: Scenario) -> list[list[int]]:
    packed = np.packbits(coverage_matrix(s), axis=-1, bitorder="little")
    from_bytes = int.from_bytes
    return [[from_bytes(row.tobytes(), "little") for row in robot] for robot in packed]


def _ids(mask: int) -> set[int]:
    out = set()
    while mask:
        low = mask & -mask
        out.add(low.bit_length() - 1)
        mask ^= low
    return out


def covered_targets(s: Scenario, robot: int, m: MotionPrimitive | int) -> set[int]:
    robot = s.check_robot(robot)
    return _ids(s.coverage_masks()[robot][MotionPrimitive(m)])


def _assignment_items(u) -> Iterable[tuple[int, int]]:
    if isinstance(u, Mapping):
        return u.items()
    return enumerate(u)


def objective(s: Scenario, u) -> int:
    """Number of distinct targets covered by an assignment.

    ``u`` is either a full per-robot sequence of primitive indices or a mapping
    ``robot -> primitive`` (a partial assignment).
    """
    masks = s.coverage_masks()
    union = 0
    for robot, m in _assignment_items(u):
        union |= masks[s.check_robot(robot)][int(m)]
    return union.bit_count()


def marginal_gain(s: Scenario, partial: Mapping[int, int], robot: int, m: MotionPrimitive | int) -> int:
    robot = s.check_robot(robot)
    if robot in partial:
        raise ValueError(f"robot {robot} is already assigned")
    masks = s.coverage_masks()
    union = 0
    for r, a in partial.items():
        union |= masks[r][int(a)]
    return (masks[robot][int(m)] & ~union).bit_count()


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_comm_graph(s: Scenario) -> CommGraph:
    dist = pairwise_distances(s.robots)
    adj = (dist <= s.params.comm_range).astype(float)
    np.fill_diagonal(adj, 0.0)
    adj.setflags(write=False)
    neighbors = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in adj)
    return CommGraph(adj, neighbors)


def observe(s: Scenario, robot: int) -> Observation:
    robot = s.check_robot(robot)
    p = s.robots[robot]
    rel = s.robots - p
    dist = np.hypot(rel[:, 0], rel[:, 1])
    seen = np.flatnonzero(dist <= s.params.sensing_range)
    seen = seen[seen != robot]
    union = 0
    for mask in s.coverage_masks()[robot]:
        union |= mask
    target_ids = np.array(sorted(_ids(union)), dtype=int)
    target_rel = s.targets[target_ids] - p if len(target_ids) else np.zeros((0, 2))
    return Observation(robot, seen, rel[seen], target_ids, target_rel)

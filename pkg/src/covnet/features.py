"""Fixed-width encoding of a robot's local observation."""

from __future__ import annotations

import numpy as np

from .world import Observation, Scenario, observe

MAX_ROBOTS = 10
MAX_TARGETS = 20
PAD_VALUE = -1.0
FEATURE_DIM = 2 * (MAX_ROBOTS + MAX_TARGETS)


def _nearest_block(ids: np.ndarray, rel: np.ndarray, cap: int) -> np.ndarray:
    block = np.full(2 * cap, PAD_VALUE)
    if len(ids) == 0:
        return block
    dist = np.hypot(rel[:, 0], rel[:, 1])
    order = np.lexsort((ids, dist))[:cap]
    block[: 2 * len(order)] = rel[order].reshape(-1)
    return block


def encode(obs: Observation) -> np.ndarray:
    """60 values: 10 nearest robots then 20 nearest coverable targets, (x, y) pairs.

    Entries are relative positions sorted by distance (ties by id); unused
    slots hold -1.
    """
    return np.concatenate(
        [
            _nearest_block(obs.robot_ids, obs.robot_rel, MAX_ROBOTS),
            _nearest_block(obs.target_ids, obs.target_rel, MAX_TARGETS),
        ]
    )


def encode_all(s: Scenario) -> np.ndarray:
    if s.n_robots == 0:
        return np.zeros((0, FEATURE_DIM))
    return np.stack([encode(observe(s, i)) for i in range(s.n_robots)])

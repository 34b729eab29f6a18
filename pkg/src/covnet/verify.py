"""Property and oracle checks behind ``covnet verify`` and the acceptance tests.

Each ``check_*`` function returns a :class:`Check` carrying the measured
quantity, so callers can both print a verdict and assert on the numbers.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .decentralized import expected_message_count, run_decentralized_inference
from .features import encode_all
from .neural import ModelConfig, cross_entropy_loss, gnn_forward, grad_check, init_params
from .selectors import exhaustive_opt, greedy_central
from .world import (
    N_PRIMITIVES,
    Scenario,
    ScenarioParams,
    build_comm_graph,
    env_side_for,
    generate_scenario,
    marginal_gain,
    objective,
)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def clustered_scenario(n_robots: int, seed: int, spread: float = 12.0,
                       params: ScenarioParams | None = None) -> Scenario:
    """Robots packed into a small box so their coverage regions overlap heavily."""
    s = generate_scenario(n_robots, params or ScenarioParams(), seed)
    rng = np.random.default_rng([seed, 7])
    centre = s.env_side / 2
    robots = centre + rng.uniform(-spread / 2, spread / 2, size=(n_robots, 2))
    return Scenario(s.params, robots, s.targets, s.env_side, seed)


def dense_scenario(n_robots: int, seed: int, side: float | None = None) -> Scenario:
    """Targets on every other cell of a small square, robots anywhere in it."""
    rng = np.random.default_rng([seed, 11])
    side = side or max(12.0, env_side_for(n_robots) / 3)
    robots = rng.uniform(0, side, size=(n_robots, 2))
    cells = rng.choice(int(side) ** 2, size=int(side) ** 2 // 3, replace=False)
    targets = np.column_stack([cells % int(side) + 0.5, cells // int(side) + 0.5])
    return Scenario(ScenarioParams(), robots, targets, side, seed)


def check_greedy_bound(n_instances: int = 500, sizes=(2, 3, 4), seed: int = 0) -> Check:
    ratios = []
    violations = 0
    for k in range(n_instances):
        n = sizes[k % len(sizes)]
        make = (generate_scenario, clustered_scenario)[k % 2]
        s = make(n, seed=seed * 1_000_003 + k)
        opt = exhaustive_opt(s).value
        greedy = greedy_central(s).value
        if opt > 0:
            ratios.append(greedy / opt)
            if 2 * greedy < opt:
                violations += 1
        else:
            ratios.append(1.0)
    mean = float(np.mean(ratios))
    ok = violations == 0 and mean >= 0.9
    return Check("greedy >= 1/2 opt", ok,
                 f"{n_instances} instances, {violations} violations, min ratio {min(ratios):.4f}, mean {mean:.4f}",
                 {"violations": violations, "mean_ratio": mean, "min_ratio": min(ratios)})


def _partials(n: int):
    for combo in itertools.product(range(-1, N_PRIMITIVES), repeat=n):
        yield {i: m for i, m in enumerate(combo) if m >= 0}


def _submodular_violations(s: Scenario, P: dict, Q: dict) -> int:
    bad = 0
    if objective(s, Q) < objective(s, P):
        bad += 1
    for robot in range(s.n_robots):
        if robot in Q:
            continue
        for m in range(N_PRIMITIVES):
            if marginal_gain(s, P, robot, m) < marginal_gain(s, Q, robot, m):
                bad += 1
    return bad


def check_submodularity(n_exhaustive: int = 100, n_random: int = 200, seed: int = 0) -> Check:
    """Monotonicity and diminishing returns over every nested pair of partial assignments (N <= 3)
    plus random nested pairs for N <= 10."""
    violations = 0
    pairs = 0
    for k in range(n_exhaustive):
        n = 1 + k % 3
        s = (clustered_scenario if k % 2 else dense_scenario)(n, seed * 7919 + k)
        partials = list(_partials(n))
        for Q in partials:
            for keep in itertools.product((False, True), repeat=len(Q)):
                P = {r: m for (r, m), kp in zip(Q.items(), keep) if kp}
                violations += _submodular_violations(s, P, Q)
                pairs += 1
    rng = np.random.default_rng(seed)
    for k in range(n_random):
        n = int(rng.integers(1, 11))
        s = (clustered_scenario if k % 2 else dense_scenario)(n, seed * 104729 + k)
        full = rng.integers(0, N_PRIMITIVES, size=n)
        q_mask = rng.random(n) < 0.6
        p_mask = q_mask & (rng.random(n) < 0.5)
        Q = {i: int(full[i]) for i in range(n) if q_mask[i]}
        P = {i: int(full[i]) for i in range(n) if p_mask[i]}
        violations += _submodular_violations(s, P, Q)
        pairs += 1
    return Check("monotone submodular objective", violations == 0,
                 f"{pairs} nested pairs checked, {violations} violations",
                 {"violations": violations, "pairs": pairs})


def random_instance(rng: np.random.Generator, n_min: int = 2, n_max: int = 12):
    n = int(rng.integers(n_min, n_max + 1))
    seed = int(rng.integers(2**31))
    s = clustered_scenario(n, seed, spread=float(rng.uniform(8, 30)))
    return s, build_comm_graph(s), encode_all(s)


def check_gradients(n_pairs: int = 10, seed: int = 0, tol: float = 1e-4) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_pairs):
        s, g, X = random_instance(rng)
        params = init_params(ModelConfig(), seed=seed * 1000 + k, dtype=np.float64)
        labels = np.array(greedy_central(s).assignment)
        worst = max(worst, grad_check(params, g.adjacency, X, labels, seed=k))
    return Check("finite-difference gradients", worst < tol,
                 f"{n_pairs} model/instance pairs, max relative error {worst:.2e} (tol {tol:g})",
                 {"max_rel_error": worst})


def hop_distances(g, source: int) -> np.ndarray:
    dist = np.full(g.n, np.inf)
    dist[source] = 0
    queue = deque([source])
    while queue:
        i = queue.popleft()
        for j in g.neighbors[i]:
            if dist[j] == np.inf:
                dist[j] = dist[i] + 1
                queue.append(j)
    return dist


def check_structure(n_instances: int = 50, seed: int = 0, tol: float = 1e-9) -> Check:
    """Permutation equivariance and L*K-hop locality of the forward pass."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    locality_failures = 0
    for k in range(n_instances):
        s, g, X = random_instance(rng, 2, 30)
        params = init_params(ModelConfig(), seed=seed * 1000 + k, dtype=np.float64)
        S = g.adjacency
        out = gnn_forward(params, S, X)
        perm = rng.permutation(s.n_robots)
        P = np.eye(s.n_robots)[perm]
        out_p = gnn_forward(params, P @ S @ P.T, P @ X)
        worst = max(worst, float(np.abs(out_p - P @ out).max()))

        reach = params.config.n_layers * params.config.taps
        i = int(rng.integers(s.n_robots))
        far = hop_distances(g, i) > reach
        X_cut = X.copy()
        X_cut[far] = 0.0
        if np.abs(gnn_forward(params, S, X_cut)[i] - out[i]).max() > 1e-12:
            locality_failures += 1
    ok = worst <= tol and locality_failures == 0
    return Check("GNN equivariance and locality", ok,
                 f"{n_instances} instances, max equivariance error {worst:.2e}, {locality_failures} locality failures",
                 {"max_equivariance_error": worst, "locality_failures": locality_failures})


def check_parity(n_instances: int = 100, max_robots: int = 50, seed: int = 0, tol: float = 1e-6) -> Check:
    """Message-passing inference against the centralized matrix forward."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    argmax_mismatch = 0
    count_mismatch = 0
    for k in range(n_instances):
        n = int(rng.integers(1, max_robots + 1))
        s = generate_scenario(n, ScenarioParams(), int(rng.integers(2**31))) if k % 2 else \
            clustered_scenario(n, int(rng.integers(2**31)), spread=float(rng.uniform(10, 40)))
        g = build_comm_graph(s)
        params = init_params(ModelConfig(), seed=seed * 1000 + k, dtype=np.float64)
        central = gnn_forward(params, g.adjacency, encode_all(s))
        res = run_decentralized_inference(s, g, params)
        worst = max(worst, float(np.abs(res.logits - central).max()))
        if res.assignment != tuple(int(a) for a in np.argmax(central, axis=-1)):
            argmax_mismatch += 1
        cfg = params.config
        if res.stats.messages != expected_message_count(g, cfg.n_layers, cfg.taps) or \
                res.stats.rounds != cfg.n_layers * cfg.taps:
            count_mismatch += 1
    ok = worst <= tol and argmax_mismatch == 0 and count_mismatch == 0
    return Check("decentralized parity", ok,
                 f"{n_instances} instances (N <= {max_robots}), max logit diff {worst:.2e}, "
                 f"{argmax_mismatch} argmax mismatches, {count_mismatch} message-count mismatches",
                 {"max_logit_diff": worst, "argmax_mismatch": argmax_mismatch, "count_mismatch": count_mismatch})


def check_loss_floor() -> Check:
    loss = cross_entropy_loss(np.zeros((3, N_PRIMITIVES)), np.array([0, 2, 4]))
    ok = abs(loss - np.log(N_PRIMITIVES)) < 1e-12
    return Check("uniform logits give ln 5", ok, f"loss {loss:.12f}")


def run_all(quick: bool = True, seed: int = 0) -> list[Check]:
    scale = 5 if quick else 1
    return [
        check_loss_floor(),
        check_greedy_bound(500 // scale, seed=seed),
        check_submodularity(100 // scale, 200 // scale, seed=seed),
        check_gradients(10 // scale, seed=seed),
        check_structure(50 // scale, seed=seed),
        check_parity(100 // scale, seed=seed),
    ]

import itertools

import numpy as np
import pytest

from covnet.selectors import (
    InstanceTooLarge,
    exhaustive_opt,
    greedy_central,
    greedy_decentralized,
    random_assign,
)
from covnet.verify import clustered_scenario, dense_scenario
from covnet.world import MotionPrimitive, build_comm_graph, generate_scenario, objective

from conftest import make_scenario

F, B, L, R, I = MotionPrimitive


def brute_force(s):
    best, best_u = -1, None
    for u in itertools.product(range(5), repeat=s.n_robots):
        v = objective(s, u)
        if v > best:
            best, best_u = v, u
    return best, best_u


def assert_partition(result, n):
    assert len(result.assignment) == n
    assert all(0 <= a < 5 for a in result.assignment)


def test_greedy_pair_layout(pair_layout):
    # gains round 1: robot0 F=2, robot1 L=3 -> (1, L); round 2: robot0 F=1 -> (0, F);
    # round 3: robot 2 covers nothing, lowest primitive wins
    res = greedy_central(pair_layout)
    assert res.assignment == (F, L, F)
    assert res.value == 4
    assert res.evaluations == 15 + 10 + 5


def test_greedy_single_robot_is_optimal():
    for seed in range(20):
        s = generate_scenario(1, seed=seed)
        assert greedy_central(s).value == exhaustive_opt(s).value == max(
            objective(s, [m]) for m in range(5))


def test_greedy_variants():
    s = dense_scenario(6, 1)
    assert greedy_central(s, "sequential").evaluations == 30
    with pytest.raises(ValueError):
        greedy_central(s, "lazy")


@pytest.mark.parametrize("seed", range(40))
def test_exhaustive_matches_brute_force(seed):
    n = 1 + seed % 4
    s = (clustered_scenario if seed % 2 else dense_scenario)(n, seed)
    res = exhaustive_opt(s)
    value, first = brute_force(s)
    assert res.value == value
    assert res.assignment == first
    assert res.evaluations == 5**n


def test_exhaustive_cap():
    s = generate_scenario(4, seed=0)
    assert exhaustive_opt(s).evaluations == 625
    with pytest.raises(InstanceTooLarge, match="too large"):
        exhaustive_opt(generate_scenario(11, seed=0))
    with pytest.raises(InstanceTooLarge):
        exhaustive_opt(s, cap=624)


def test_selectors_dominated_by_opt_and_half_bound():
    for seed in range(60):
        s = clustered_scenario(2 + seed % 3, seed)
        opt = exhaustive_opt(s).value
        g = greedy_central(s)
        for res in (g, greedy_central(s, "sequential"), greedy_decentralized(s), random_assign(s, seed)):
            assert res.value <= opt
            assert res.value == objective(s, res.assignment)
            assert_partition(res, s.n_robots)
        assert 2 * g.value >= opt


def test_greedy_evaluation_count_quadratic():
    counts = {}
    for n in (10, 20, 40):
        s = generate_scenario(n, seed=1)
        counts[n] = greedy_central(s).evaluations
        assert counts[n] <= (5 * n) ** 2
    assert counts[20] / counts[10] <= 4.5
    assert counts[40] / counts[20] <= 4.5


def test_decentralized_without_edges_is_individual_best():
    s = make_scenario([(10, 10), (50, 50), (90, 10)],
                      [(10.5, 20.5), (10.5, 25.5), (60.5, 50.5), (90.5, 5.5), (90.5, 12.5)])
    g = build_comm_graph(s)
    assert not g.adjacency.any()
    res = greedy_decentralized(s, g)
    for i, a in enumerate(res.assignment):
        gains = [objective(s, {i: m}) for m in range(5)]
        assert a == gains.index(max(gains))


@pytest.mark.parametrize("seed", range(15))
def test_decentralized_complete_graph_equals_sequential(seed):
    s = clustered_scenario(5, seed, spread=6.0)
    g = build_comm_graph(s)
    assert g.adjacency.sum() == 20
    assert greedy_decentralized(s, g).assignment == greedy_central(s, "sequential").assignment


def test_decentralized_pair_layout(pair_layout):
    g = build_comm_graph(pair_layout)
    assert g.neighbors == ((1,), (0,), ())
    res = greedy_decentralized(pair_layout, g)
    assert res.assignment == (F, L, F)
    assert res.value == 4


def test_decentralized_uses_only_one_hop():
    # robot 2 sits two hops from robot 0; moving it must not change robot 0's choice
    base = [(20, 20), (28, 20), (36, 20)]
    targets = [(20.5, 30.5), (28.5, 30.5), (36.5, 30.5), (36.5, 10.5), (44.5, 20.5)]
    s1 = make_scenario(base, targets)
    s2 = make_scenario([base[0], base[1], (36, 24)], targets)
    assert build_comm_graph(s1).neighbors[0] == build_comm_graph(s2).neighbors[0] == (1,)
    assert greedy_decentralized(s1).assignment[0] == greedy_decentralized(s2).assignment[0]


def test_random_assign():
    s = generate_scenario(30, seed=2)
    assert random_assign(s, 9).assignment == random_assign(s, 9).assignment
    big = make_scenario(np.random.default_rng(0).uniform(0, 100, (10000, 2)), [(0.5, 0.5)])
    res = random_assign(big, 3)
    assert_partition(res, 10000)
    freq = np.bincount(res.assignment, minlength=5) / 10000
    assert np.all(np.abs(freq - 0.2) <= 0.02)

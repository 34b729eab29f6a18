import numpy as np
import pytest

from covnet.decentralized import (
    ProtocolViolation,
    RobotNode,
    dump_trace,
    expected_message_count,
    run_decentralized_inference,
)
from covnet.features import encode_all
from covnet.neural import ModelConfig, gnn_forward, init_params
from covnet.verify import clustered_scenario
from covnet.world import CommGraph, build_comm_graph, generate_scenario

from conftest import make_scenario


@pytest.fixture
def params():
    return init_params(seed=0, dtype=np.float64)


def test_edgeless_graph_sends_nothing(params):
    s = make_scenario([(10, 10), (50, 50), (90, 90)], [(10.5, 20.5), (50.5, 40.5)])
    g = build_comm_graph(s)
    res = run_decentralized_inference(s, g, params)
    assert res.stats.messages == 0 and res.stats.payload_values == 0
    assert res.stats.rounds == 2
    central = gnn_forward(params, np.zeros((3, 3)), encode_all(s))
    np.testing.assert_allclose(res.logits, central, atol=1e-12)
    assert res.assignment == tuple(np.argmax(central, axis=1))


def test_path_of_three_counts(params):
    s = make_scenario([(0, 0), (10, 0), (20, 0)], [(10.5, 10.5)])
    res = run_decentralized_inference(s, build_comm_graph(s), params, record_trace=True)
    assert res.stats.rounds == 2
    assert res.stats.messages == 8
    # layer 1 exchanges encoder outputs (8 values), layer 2 exchanges 32-wide features
    assert res.stats.payload_values == 4 * 8 + 4 * 32
    assert [t[0] for t in res.trace] == [1] * 4 + [2] * 4
    assert {(t[1], t[2]) for t in res.trace} == {(0, 1), (1, 0), (1, 2), (2, 1)}


@pytest.mark.parametrize("seed", range(10))
def test_matches_centralized_forward(seed, params):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 51))
    s = clustered_scenario(n, seed, spread=float(rng.uniform(10, 40)))
    g = build_comm_graph(s)
    res = run_decentralized_inference(s, g, params)
    central = gnn_forward(params, g.adjacency, encode_all(s))
    assert np.abs(res.logits - central).max() <= 1e-6
    assert res.assignment == tuple(int(a) for a in np.argmax(central, axis=1))
    assert res.stats.messages == expected_message_count(g, 2, 1)


def test_message_formula_with_more_taps():
    params = init_params(ModelConfig(taps=3), seed=1, dtype=np.float64)
    s = generate_scenario(30, seed=4)
    g = build_comm_graph(s)
    res = run_decentralized_inference(s, g, params)
    assert res.stats.rounds == 6
    assert res.stats.messages == 6 * g.adjacency.sum()
    central = gnn_forward(params, g.adjacency, encode_all(s))
    np.testing.assert_allclose(res.logits, central, atol=1e-6)


def test_non_neighbour_payload_is_rejected(params):
    node = RobotNode(0, {1: 1.0}, params)
    node.receive(1, np.zeros(8))
    with pytest.raises(ProtocolViolation):
        node.receive(2, np.zeros(8))


def test_asymmetric_graph_triggers_violation(params):
    s = make_scenario([(0, 0), (5, 0)], [(0.5, 0.5)])
    adj = np.array([[0.0, 1.0], [0.0, 0.0]])
    bogus = CommGraph(adj, ((1,), ()))
    with pytest.raises(ProtocolViolation):
        run_decentralized_inference(s, bogus, params)


@pytest.mark.parametrize("seed", range(5))
def test_round_one_ignores_non_neighbours(seed, params):
    # one layer, one tap: a node's output is exactly its round-1 computation
    rng = np.random.default_rng(seed)
    s = clustered_scenario(15, seed, spread=30.0)
    g = build_comm_graph(s)
    one_layer = init_params(ModelConfig(gnn_dims=(32,)), seed=seed, dtype=np.float64)
    X = encode_all(s)
    base = run_decentralized_inference(s, g, one_layer, features=X).logits
    for i in range(s.n_robots):
        others = [j for j in range(s.n_robots) if j != i and j not in g.neighbors[i]]
        noisy = X.copy()
        noisy[others] = rng.normal(size=(len(others), X.shape[1])) * 50
        out = run_decentralized_inference(s, g, one_layer, features=noisy).logits
        np.testing.assert_array_equal(out[i], base[i])


def test_trace_dump(tmp_path, params):
    s = make_scenario([(0, 0), (10, 0)], [(0.5, 0.5)])
    res = run_decentralized_inference(s, None, params, record_trace=True)
    path = dump_trace(res.trace, tmp_path / "trace.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "round,sender,receiver,payload_len"
    assert lines[1:] == ["1,0,1,8", "1,1,0,8", "2,0,1,32", "2,1,0,32"]

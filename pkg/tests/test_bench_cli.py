import statistics

import numpy as np
import pytest

from covnet import bench
from covnet.cli import main
from covnet.neural import init_params, load_checkpoint, save_checkpoint
from covnet.selectors import InstanceTooLarge, exhaustive_opt, greedy_central
from covnet.world import generate_scenario


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "m.json"
    save_checkpoint(init_params(seed=3), path)
    return path


def test_config_validation():
    with pytest.raises(ValueError):
        bench.BenchConfig([4], 0)
    with pytest.raises(ValueError):
        bench.BenchConfig([], 3)
    with pytest.raises(ValueError, match="unknown"):
        bench.BenchConfig([4], 3, ["greedy", "magic"])


def test_gnn_needs_model():
    with pytest.raises(ValueError, match="model"):
        bench.run_benchmark(bench.BenchConfig([4], 1, ["gnn"]))


def test_opt_over_cap_is_rejected():
    with pytest.raises(InstanceTooLarge):
        bench.run_benchmark(bench.BenchConfig([4, 11], 1, ["opt", "greedy"]))
    with pytest.raises(InstanceTooLarge):
        bench.run_benchmark(bench.BenchConfig([4], 1, ["opt"], opt_cap=5**3))


def test_rows_schema_and_pairing(tmp_path, model_path):
    cfg = bench.BenchConfig([3, 5], 4, bench.ALGORITHMS, master_seed=11, csv_path=tmp_path / "b.csv")
    rows = bench.run_benchmark(cfg, load_checkpoint(model_path))
    trials = [r for r in rows if r["trial"] != "mean"]
    assert len(trials) == 2 * 4 * 5
    assert len(rows) - len(trials) == 2 * 5
    for n in (3, 5):
        for t in range(4):
            same = [r for r in trials if r["n_robots"] == n and r["trial"] == t]
            assert {r["algorithm"] for r in same} == set(bench.ALGORITHMS)
            assert len({r["seed"] for r in same}) == 1
            assert len({r["greedy_covered"] for r in same}) == 1
            s = generate_scenario(n, seed=same[0]["seed"])
            by_algo = {r["algorithm"]: r for r in same}
            assert by_algo["greedy"]["covered"] == greedy_central(s).value
            assert by_algo["opt"]["covered"] == exhaustive_opt(s).value
            assert by_algo["opt"]["covered"] >= by_algo["greedy"]["covered"]
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header == ",".join(bench.COLUMNS)


def test_aggregates_match_raw_rows(tmp_path):
    cfg = bench.BenchConfig([4, 6], 7, ["greedy", "dgreedy", "random"], master_seed=2, csv_path=tmp_path / "a.csv")
    bench.run_benchmark(cfg)
    rows = bench.read_csv(tmp_path / "a.csv")
    raw = [r for r in rows if r["trial"] != "mean"]
    emitted = [r for r in rows if r["trial"] == "mean"]
    assert all(r["seed"] == "" for r in emitted)
    for agg in emitted:
        sel = [r for r in raw if r["algorithm"] == agg["algorithm"] and r["n_robots"] == agg["n_robots"]]
        assert len(sel) == 7
        for col in ("covered", "greedy_covered", "ratio", "runtime_us"):
            assert float(agg[col]) == statistics.fmean(float(r[col]) for r in sel)


def test_rerun_is_identical_except_runtime(tmp_path):
    paths = []
    for k in range(2):
        cfg = bench.BenchConfig([4, 8], 5, ["greedy", "dgreedy", "random", "opt"], master_seed=9,
                                csv_path=tmp_path / f"r{k}.csv")
        bench.run_benchmark(cfg)
        paths.append(tmp_path / f"r{k}.csv")
    a, b = (bench.read_csv(p) for p in paths)
    strip = [c for c in bench.COLUMNS if c != "runtime_us"]
    assert [[r[c] for c in strip] for r in a] == [[r[c] for c in strip] for r in b]


def test_greedy_close_to_opt_at_four():
    rows = bench.run_benchmark(bench.BenchConfig([4], 200, ["greedy", "opt"], master_seed=0))
    greedy = [r["covered"] for r in rows if r["algorithm"] == "greedy" and r["trial"] != "mean"]
    opt = [r["covered"] for r in rows if r["algorithm"] == "opt" and r["trial"] != "mean"]
    ratios = [g / o if o else 1.0 for g, o in zip(greedy, opt)]
    assert min(ratios) >= 0.5
    assert statistics.fmean(ratios) >= 0.9


def test_coverage_ordering_of_baselines():
    rows = bench.run_benchmark(bench.BenchConfig([6], 150, ["opt", "greedy", "dgreedy", "random"], master_seed=4))
    mean = {r["algorithm"]: r["covered"] for r in rows if r["trial"] == "mean"}
    assert mean["opt"] >= mean["greedy"] > mean["dgreedy"] > mean["random"]


def test_expert_row_is_one_hundred_percent(model_path):
    rows = bench.generalization_matrix({20: "expert", 10: load_checkpoint(model_path)}, [5, 12], trials=6,
                                       master_seed=1)
    expert = [r for r in rows if r["train_size"] == 20]
    assert [r["mean_ratio"] for r in expert] == [1.0, 1.0]
    assert all(r["std_ratio"] == 0.0 for r in expert)
    other = [r for r in rows if r["train_size"] == 10]
    assert all(0.0 <= r["mean_ratio"] <= 5.0 for r in other)
    with pytest.raises(ValueError):
        bench.generalization_matrix({4: "oracle"}, [4], 1)


def test_cli_gen_train_eval_bench_genmatrix(tmp_path, capsys):
    data, model = tmp_path / "d.jsonl", tmp_path / "m.json"
    assert main(["gen", "--n-robots", "8", "--instances", "40", "--seed", "5", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--epochs", "2", "--batch", "8", "--seed", "1", "--out", str(model),
                 "--history", str(tmp_path / "h.csv")]) == 0
    assert load_checkpoint(model).meta["n_robots"] == 8
    assert (tmp_path / "h.csv").read_text().count("\n") == 3
    assert main(["eval", "--model", str(model), "--n-robots", "6", "--trials", "3", "--seed", "2",
                 "--csv", str(tmp_path / "e.csv")]) == 0
    assert len(bench.read_csv(tmp_path / "e.csv")) == 9
    assert main(["bench", "--sizes", "3,4", "--trials", "2", "--seed", "0", "--model", str(model),
                 "--csv", str(tmp_path / "b.csv")]) == 0
    assert len(bench.read_csv(tmp_path / "b.csv")) == 2 * 2 * 5 + 2 * 5
    assert main(["genmatrix", "--models", f"8={model},20=expert", "--test-sizes", "4,6", "--trials", "2",
                 "--csv", str(tmp_path / "g.csv")]) == 0
    out = capsys.readouterr().out
    assert "100.00%" in out
    assert [r["train_size"] for r in bench.read_csv(tmp_path / "g.csv")] == ["8", "8", "20", "20"]


def test_cli_errors_are_one_line(tmp_path, capsys):
    assert main(["bench", "--sizes", "12", "--algorithms", "opt", "--trials", "1"]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("covnet bench: error:") and "\n" not in err
    assert main(["eval", "--model", str(tmp_path / "missing.json"), "--n-robots", "4"]) == 1
    assert main(["genmatrix", "--models", f"4={tmp_path / 'nope.json'}", "--test-sizes", "4",
                 "--csv", str(tmp_path / "g.csv")]) == 1
    with pytest.raises(SystemExit):
        main(["bench", "--sizes", "a,b"])


def test_cli_verify_quick(capsys):
    assert main(["verify"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 5 and all(line.startswith("PASS") for line in lines)


def test_trial_seeds_are_distinct():
    seeds = {bench.trial_seed(0, n, t, s) for n in (4, 10) for t in range(50) for s in (0, 1)}
    assert len(seeds) == 200
    assert bench.trial_seed(0, 4, 0) == bench.trial_seed(0, 4, 0)
    assert np.uint64(bench.trial_seed(0, 4, 0)) == bench.trial_seed(0, 4, 0)

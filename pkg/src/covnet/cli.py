"""``covnet`` command line: gen, train, eval, bench, genmatrix, verify."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import bench, imitation, verify
from .neural import ModelConfig, load_checkpoint, save_checkpoint
from .selectors import DEFAULT_OPT_CAP
from .world import ScenarioParams

log = logging.getLogger("covnet")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _models(text: str) -> dict[int, str]:
    out = {}
    for item in text.split(","):
        size, sep, path = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected size=path, got {item!r}")
        out[int(size)] = path
    return out


def cmd_gen(args) -> int:
    params = ScenarioParams(args.sensing_range, args.comm_range, args.fov, args.travel, args.density)
    path = imitation.generate_dataset(args.n_robots, args.instances, params, args.seed, args.out,
                                      expert=args.expert)
    print(f"wrote {args.instances} instances to {path}")
    return 0


def cmd_train(args) -> int:
    header, records = imitation.load_dataset(args.data)
    train_recs, val_recs, test_recs = imitation.split(records, header.split, args.split_seed)
    config = imitation.TrainConfig(
        epochs=args.epochs, batch_size=args.batch, lr_max=args.lr_max, lr_min=args.lr_min, seed=args.seed,
        model=ModelConfig(taps=args.taps, activation=args.activation, bias=not args.no_bias,
                          input_scale=args.input_scale),
    )
    result = imitation.train(imitation.tensorize(train_recs), imitation.tensorize(val_recs), config,
                             progress=args.verbose)
    if result.diverged:
        print("warning: training diverged; saving the last good checkpoint", file=sys.stderr)
    best = result.history[result.best_epoch] if result.history else {}
    save_checkpoint(result.params, args.out, dataset=Path(args.data).name, split_seed=args.split_seed,
                    n_robots=header.n_robots, val_loss=best.get("val_loss"), val_acc=best.get("val_acc"))
    if args.history:
        with open(args.history, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(result.history[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(result.history)
    summary = imitation.evaluate_model(result.params, [r.scenario for r in test_recs], random_seed=args.seed)
    print(f"best epoch {result.best_epoch}: val_loss {best.get('val_loss', float('nan')):.4f} "
          f"val_acc {best.get('val_acc', float('nan')):.4f}; held-out coverage ratio {summary.mean_ratio:.4f} "
          f"(random {summary.random_mean_ratio:.4f}); saved {args.out}")
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.model)
    scenarios = imitation.fresh_scenarios(args.n_robots, args.trials, args.seed)
    summary = imitation.evaluate_model(params, scenarios, random_seed=args.seed)
    if args.csv:
        rows = []
        for r in summary.rows:
            for algo, covered, runtime in (("gnn", r["covered"], r["runtime_us"]),
                                           ("random", r["random_covered"], ""),
                                           ("greedy", r["greedy_covered"], "")):
                rows.append({"algorithm": algo, "n_robots": args.n_robots, "trial": r["trial"], "covered": covered,
                             "greedy_covered": r["greedy_covered"],
                             "ratio": imitation.coverage_ratio(covered, r["greedy_covered"]),
                             "runtime_us": runtime, "seed": r["seed"]})
        bench.write_csv(rows, args.csv)
    print(f"N={args.n_robots} trials={args.trials}: gnn/greedy {summary.mean_ratio:.4f} +- {summary.std_ratio:.4f}, "
          f"random/greedy {summary.random_mean_ratio:.4f}, gnn runtime {summary.mean_runtime_us:.1f} us")
    return 0


def cmd_bench(args) -> int:
    model = load_checkpoint(args.model) if args.model else None
    cfg = bench.BenchConfig(args.sizes, args.trials, args.algorithms, args.seed, args.opt_cap, args.csv)
    rows = bench.run_benchmark(cfg, model)
    for r in rows:
        if r["trial"] == "mean":
            print(f"N={r['n_robots']:<4} {r['algorithm']:<8} covered {r['covered']:8.2f}  "
                  f"ratio {r['ratio']:.4f}  runtime {r['runtime_us']:12.1f} us")
    return 0


def cmd_genmatrix(args) -> int:
    models = {size: ("expert" if path == "expert" else load_checkpoint(path)) for size, path in args.models.items()}
    rows = bench.generalization_matrix(models, args.test_sizes, args.trials, args.seed)
    bench.write_csv(rows, args.csv, bench.MATRIX_COLUMNS)
    print("train\\test " + " ".join(f"{n:>8}" for n in args.test_sizes))
    for size in models:
        cells = {r["test_size"]: r["mean_ratio"] for r in rows if r["train_size"] == size}
        print(f"{size:>10} " + " ".join(f"{100 * cells[n]:7.2f}%" for n in args.test_sizes))
    return 0


def cmd_verify(args) -> int:
    checks = verify.run_all(quick=not args.full, seed=args.seed)
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise RuntimeError(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covnet", description="Multi-robot target coverage workbench.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an expert-labelled dataset")
    p.add_argument("--n-robots", type=int, required=True)
    p.add_argument("--instances", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--density", type=float, default=0.025)
    p.add_argument("--comm-range", type=float, default=10.0)
    p.add_argument("--sensing-range", type=float, default=20.0)
    p.add_argument("--fov", type=float, default=6.0)
    p.add_argument("--travel", type=float, default=20.0)
    p.add_argument("--expert", choices=("global", "sequential"), default="global")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the GNN policy by imitation")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr-max", type=float, default=5e-3)
    p.add_argument("--lr-min", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="optional CSV of per-epoch losses")
    p.add_argument("--taps", type=int, default=1)
    p.add_argument("--activation", choices=("relu", "identity"), default="relu")
    p.add_argument("--no-bias", action="store_true")
    p.add_argument("--input-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on fresh instances")
    p.add_argument("--model", required=True)
    p.add_argument("--n-robots", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="paired runtime/coverage benchmark")
    p.add_argument("--sizes", type=_int_list, default=[4, 6, 8, 10])
    p.add_argument("--algorithms", type=lambda t: [a for a in t.split(",") if a], default=list(bench.ALGORITHMS))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model")
    p.add_argument("--csv")
    p.add_argument("--opt-cap", type=int, default=DEFAULT_OPT_CAP)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("genmatrix", help="train-size x test-size generalization matrix")
    p.add_argument("--models", type=_models, required=True, help="size=path,... ('expert' as path for greedy)")
    p.add_argument("--test-sizes", type=_int_list, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_genmatrix)

    p = sub.add_parser("verify", help="run the oracle, gradient and parity checks")
    p.add_argument("--full", action="store_true", help="acceptance-size runs instead of quick ones")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one-line reason, nonzero exit
        print(f"covnet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points for training, pruning, attacking, and sweeps."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from sparsemia import experiment, mia
from sparsemia.imp import ImpSchedule, imp_run
from sparsemia.nn import save_network, train
from sparsemia.nn.network import accuracy
from sparsemia.rng import seed_stream


def _load(args):
    config = experiment.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config.seeds = (args.seed,)
    if getattr(args, "output_dir", None):
        config.output_dir = args.output_dir
    if not config.output_dir:
        config.output_dir = "out"
    os.makedirs(config.output_dir, exist_ok=True)
    return config


def _emit(payload):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _prepare_target(config, seed):
    dataset = experiment.build_dataset(config)
    split = mia.partition(len(dataset), master_seed=seed)
    level = experiment.parse_level(config.model)
    return dataset, split, level


def cmd_train(args):
    config = _load(args)
    seed = config.seeds[0]
    dataset, split, level = _prepare_target(config, seed)
    net, _ = experiment._train_side(
        config, level, seed, dataset, split.target_train, split.target_val, "target"
    )
    path = os.path.join(config.output_dir, f"model_seed{seed}.ckpt")
    save_network(net, path)
    test_acc = accuracy(net, dataset.subset(split.target_test))
    _emit({"command": "train", "seed": seed, "model": level.label,
           "checkpoint": path, "test_accuracy": test_acc})
    return 0


def cmd_imp(args):
    config = _load(args)
    seed = config.seeds[0]
    dataset, split, level = _prepare_target(config, seed)
    if level.kind != "imp":
        raise ValueError(f"config model {config.model!r} is not an imp spec")
    net = experiment._build_network(config, level, dataset,
                                    seed_stream(seed, f"{level.label}-target-init"))
    train_cfg = config.train_config(
        seed=int(seed_stream(seed, f"{level.label}-target-train").integers(2 ** 31))
    )
    results = imp_run(net, dataset.subset(split.target_train),
                      dataset.subset(split.target_val), train_cfg,
                      ImpSchedule(rounds=level.rounds), out_dir=config.output_dir)
    _emit({"command": "imp", "seed": seed, "rounds": level.rounds,
           "output_dir": config.output_dir,
           "sparsities": [f for f, _ in results],
           "val_accuracy": [m.best_val_accuracy for _, m in results]})
    return 0


def cmd_attack(args):
    config = _load(args)
    seed = config.seeds[0]
    dataset = experiment.build_dataset(config)
    level = experiment.parse_level(config.model)
    dense_total = experiment._dense_param_total(config, dataset)
    record = experiment.run_pipeline(config, level, seed, dataset, dense_total)
    if record.failed:
        raise RuntimeError(record.error)
    path = os.path.join(config.output_dir, f"attack_seed{seed}.json")
    with open(path, "w") as f:
        json.dump(asdict(record), f, indent=2, sort_keys=True)
    _emit({"command": "attack", "outcome": asdict(record), "path": path})
    return 0


def cmd_sweep(args):
    config = _load(args)
    report = experiment.run_sweep(config)
    report_path = os.path.join(config.output_dir, "report.json")
    csv_path = os.path.join(config.output_dir, "records.csv")
    svg_path = os.path.join(config.output_dir, "figure.svg")
    report.save_json(report_path)
    report.save_csv(csv_path)
    experiment.emit_figure(report, svg_path)
    _emit({"command": "sweep",
           "report": report_path, "csv": csv_path, "figure": svg_path,
           "levels": [a.level for a in report.aggregates]})
    return 0


def cmd_report(args):
    report = experiment.ExperimentReport.load_json(args.report)
    payload = {"command": "report", "aggregates": report.to_dict()["aggregates"]}
    if args.window:
        lo, hi = args.window
        tradeoff = experiment.compute_tradeoff(report, (lo, hi))
        payload["tradeoff"] = {
            "window": [lo, hi], "slope": tradeoff.slope, "ratio": tradeoff.ratio,
            "points": tradeoff.points, "excluded": tradeoff.excluded,
        }
    _emit(payload)
    return 0


def cmd_plot(args):
    report = experiment.ExperimentReport.load_json(args.report)
    experiment.emit_figure(report, args.output)
    _emit({"command": "plot", "figure": args.output})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsemia",
        description="Train sparse networks and measure membership-inference robustness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, needs_seed in (
        ("train", cmd_train, True),
        ("imp", cmd_imp, True),
        ("attack", cmd_attack, True),
        ("sweep", cmd_sweep, False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--output-dir", default=None)
        if needs_seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the configured seed list with one seed")
        p.set_defaults(fn=fn)

    p = sub.add_parser("report")
    p.add_argument("--report", required=True, help="report JSON produced by sweep")
    p.add_argument("--window", nargs=2, type=float, default=None,
                   metavar=("LO", "HI"), help="sparsity window for the trade-off fit")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("plot")
    p.add_argument("--report", required=True)
    p.add_argument("--output", required=True, help="SVG output path")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - surface a machine-readable diagnostic
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

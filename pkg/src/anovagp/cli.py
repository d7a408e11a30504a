"""Command-line interface: decompose, train, predict, benchmark, inspect."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .anova import adaptive_decompose, index_order_key
from .bench import build_simulator, load_config, run_experiment
from .emulator import (AnovaGpEmulator, SgpEmulator, load_emulator,
                       predict_sgp_mean)
from .exceptions import AnovaGpError, ConfigError


def _fail(code: int, kind: str, message: str) -> int:
    json.dump({"error": kind, "message": message}, sys.stderr)
    sys.stderr.write("\n")
    return code


def _apply_seed_override(config, args):
    if args.seed is not None:
        config.seed = args.seed
    return config


def cmd_decompose(args) -> int:
    config = _apply_seed_override(load_config(args.config), args)
    sim = build_simulator(config.simulator)
    result = adaptive_decompose(
        sim, tol_index=config.tol_index, nodes_per_dim=config.nodes_per_dim,
        max_order=config.max_order, denominator=config.denominator)
    sel = result.selection
    payload = {
        "orders": {str(i): [list(t) for t in sorted(ts)]
                   for i, ts in sel.orders.items()},
        "weights": {",".join(map(str, t)): w for t, w in sel.weights.items()},
        "candidate_counts": sel.candidate_counts,
        "simulator_calls": result.cache.misses,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "selection.json", "w") as fh:
            json.dump(payload, fh, indent=2)
    else:
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def cmd_train(args) -> int:
    config = _apply_seed_override(load_config(args.config), args)
    out = args.out or "."
    run_experiment(config, out_dir=out)
    return 0


def cmd_benchmark(args) -> int:
    config = _apply_seed_override(load_config(args.config), args)
    out = args.out or "."
    report = run_experiment(config, out_dir=out)
    for method, summary in report.summaries.items():
        print(f"{method}: median relative error {summary['median']:.3e}")
    return 0


def _load_points(config_path: str) -> np.ndarray:
    with open(config_path) as fh:
        text = fh.read()
    if config_path.endswith(".json"):
        data = json.loads(text)
    else:
        import yaml
        data = yaml.safe_load(text)
    if isinstance(data, dict) and "points" in data:
        return np.asarray(data["points"], dtype=float)
    if isinstance(data, dict) and "points_csv" in data:
        return np.loadtxt(data["points_csv"], delimiter=",", ndmin=2)
    raise ConfigError("prediction config needs 'points' or 'points_csv'")


def cmd_predict(args) -> int:
    emulator = load_emulator(args.emulator)
    points = _load_points(args.config)
    if isinstance(emulator, AnovaGpEmulator):
        preds = [emulator.predict_mean(x) for x in points]
    elif isinstance(emulator, SgpEmulator):
        preds = [predict_sgp_mean(emulator, x) for x in points]
    else:
        raise ConfigError("unsupported emulator archive")
    dest = sys.stdout
    handle = None
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handle = open(out / "predictions.csv", "w", newline="")
        dest = handle
    try:
        writer = csv.writer(dest)
        for j, p in enumerate(preds):
            writer.writerow([j] + [repr(float(v)) for v in p])
    finally:
        if handle is not None:
            handle.close()
    return 0


def cmd_inspect(args) -> int:
    emulator = load_emulator(args.emulator)
    if isinstance(emulator, SgpEmulator):
        payload = {"kind": "sgp", "rank": emulator.rank,
                   "n_train": int(emulator.train_inputs.shape[0])}
    else:
        terms = [{"index": list(t), "rank": loc.rank,
                  "n_train": int(loc.train_inputs.shape[0])}
                 for t, loc in sorted(emulator.locals.items(),
                                      key=lambda kv: index_order_key(kv[0]))]
        payload = {"kind": "anova-gp", "n_terms": len(terms) + 1,
                   "terms": terms,
                   "candidate_counts": emulator.selection.candidate_counts}
    if args.format == "csv" and payload["kind"] == "anova-gp":
        writer = csv.writer(sys.stdout)
        writer.writerow(["index", "rank", "n_train"])
        for row in payload["terms"]:
            writer.writerow(["+".join(map(str, row["index"])),
                             row["rank"], row["n_train"]])
    else:
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anovagp",
        description="ANOVA-GP surrogate emulators for expensive simulators")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, needs_config=True, needs_emulator=False):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True)
        if needs_emulator:
            p.add_argument("--emulator", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["csv", "json"], default="json")
        p.set_defaults(func=func)
        return p

    add("decompose", cmd_decompose)
    add("train", cmd_train)
    add("benchmark", cmd_benchmark)
    add("predict", cmd_predict, needs_emulator=True)
    add("inspect", cmd_inspect, needs_config=False, needs_emulator=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        return _fail(2, "config", str(err))
    except FileNotFoundError as err:
        return _fail(2, "config", str(err))
    except AnovaGpError as err:
        return _fail(1, type(err).__name__, str(err))


if __name__ == "__main__":
    sys.exit(main())

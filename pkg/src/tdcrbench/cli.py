"""Command-line entry point: ``tdcrbench collect | train | benchmark | characterize | calibrate``.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.
Outputs go to ``--out`` or, when that is omitted, to ``$TDCRBENCH_OUT``
(default ``./runs``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import CONTROLLERS, LEARNED, ConfigError, load_config
from .datagen import DatasetError, load_dataset, save_dataset
from .nn.io import load_model, save_model, write_loss_history
from .plant import REFERENCE_CYCLIC_STATS, calibrate_hysteresis, characterize_hysteresis

log = logging.getLogger("tdcrbench")

OK, USAGE, IO_ERROR, NUMERICAL = 0, 1, 2, 3
OUT_ENV = "TDCRBENCH_OUT"


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def out_dir(arg) -> Path:
    return Path(arg or os.environ.get(OUT_ENV, "runs"))


def positive(kind):
    def check(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return check


def non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tdcrbench", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="TOML run configuration (defaults used when omitted)")
    p.add_argument("--seed", type=int, help="global seed, overrides the config file")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("collect", help="Monte Carlo data collection on the simulated plant")
    c.add_argument("--duration", type=positive(float), help="seconds of excursions (default 408)")
    c.add_argument("--rate", type=positive(float), help="sample rate in Hz (default 5)")
    c.add_argument("--seed", dest="sub_seed", type=int, help="collection seed (default 0)")
    c.add_argument("--out", help="output directory; writes dataset.csv and dataset.json")

    t = sub.add_parser("train", help="train a learned controller or run the architecture grid")
    t.add_argument("--arch", choices=LEARNED, default=None, help="network type (default gru)")
    t.add_argument("--layers", type=positive(int), help="stacked layers")
    t.add_argument("--hidden", type=positive(int), help="hidden units per layer")
    t.add_argument("--epochs", type=non_negative_int, help="max epochs; 0 saves the initial weights")
    t.add_argument("--dataset", help="dataset CSV (default <out>/dataset.csv)")
    t.add_argument("--out", help="output directory for <arch>.weights.json and <arch>_loss.csv")
    t.add_argument("--grid", action="store_true", help="train the GRU/LSTM grid and write grid.csv")
    t.add_argument("--full-scale", action="store_true", help="4 layers x 128 hidden, 1500 epochs")
    t.add_argument("--seed", dest="sub_seed", type=int, help="training seed")

    b = sub.add_parser("benchmark", help="closed-loop tracking benchmark and report")
    b.add_argument("--task", choices=("a", "b", "all"), help="trajectory set (default all)")
    b.add_argument("--controllers", help=f"comma list from {','.join(CONTROLLERS)}")
    b.add_argument("--trials", type=positive(int), help="trials per trajectory (default 5)")
    b.add_argument("--models", help="directory holding <arch>.weights.json (default --out)")
    b.add_argument("--out", help="output directory for taskA.csv, taskB.csv, benchmark.json, errors_*.csv")
    b.add_argument("--seed", dest="sub_seed", type=int, help="benchmark seed")

    h = sub.add_parser("characterize", help="cyclic-loading statistics of the sheath model")
    h.add_argument("--loads", default="0,50,100", help="comma list of loads in grams")
    h.add_argument("--cycles", type=int, default=3, help="loading cycles (>= 3)")
    h.add_argument("--out", help="output directory for hysteresis.csv")

    k = sub.add_parser("calibrate", help="grid-search sheath parameters against the reference statistics")
    k.add_argument("--out", help="output directory for calibration.json")
    return p


def _config(args):
    cfg = load_config(args.config)
    seed = getattr(args, "sub_seed", None)
    seed = seed if seed is not None else args.seed
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def cmd_collect(args, cfg) -> int:
    out = out_dir(args.out)
    ds = pipeline.collect(cfg, args.duration, args.rate)
    path = save_dataset(ds, out / "dataset.csv")
    n_train, n_val, n_test = ds.splits
    print(f"collected {len(ds)} samples (train {n_train}, val {n_val}, test {n_test}); "
          f"{ds.metadata['rejections']} excursions rejected -> {path}")
    return OK


def cmd_train(args, cfg) -> int:
    out = out_dir(args.out)
    dataset = Path(args.dataset) if args.dataset else out / "dataset.csv"
    if not dataset.exists():
        raise FileNotFoundError(f"dataset not found: {dataset}")
    ds = load_dataset(dataset)
    if args.full_scale:
        cfg = replace(cfg, train=replace(cfg.train, layers=4, hidden=128,
                                         optimizer=replace(cfg.train.optimizer, max_epochs=1500)))
    if args.grid:
        rows = pipeline.run_grid(ds, cfg, epochs=args.epochs)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "grid.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["arch", "layers", "hidden", "validation_loss", "seconds_per_epoch", "epochs",
                        "config_hash", "seed"])
            for r in rows:
                w.writerow([r["arch"], r["layers"], r["hidden"], repr(r["validation_loss"]),
                            repr(r["seconds_per_epoch"]), r["epochs"], cfg.hash(), cfg.seed])
        print(f"wrote {len(rows)} grid rows -> {out / 'grid.csv'}")
        return OK
    arch = args.arch or cfg.train.arch
    if args.epochs == 0:
        log.warning("--epochs 0: saving the untrained initial weights")
    model, history = pipeline.train_model(ds, arch, cfg, args.layers, args.hidden, args.epochs)
    if not all(math.isfinite(h.val_loss) for h in history):
        raise NumericalError("validation loss became non-finite")
    weights = save_model(model, out / f"{arch}.weights.json")
    write_loss_history(history, out / f"{arch}_loss.csv")
    print(f"trained {arch} {model.layers}x{model.hidden} for {history[-1].epoch} epochs; "
          f"best val MAE {model.metadata['best_val_mae']:.5f} -> {weights}")
    return OK


def cmd_benchmark(args, cfg) -> int:
    out = out_dir(args.out)
    names = [s.strip() for s in args.controllers.split(",")] if args.controllers else list(cfg.benchmark.controllers)
    bad = [n for n in names if n not in CONTROLLERS]
    if bad or not names:
        raise UsageError(f"unknown controllers: {','.join(bad) or '(none)'}")
    model_dir = Path(args.models) if args.models else out
    models = {}
    for n in names:
        if n in LEARNED:
            path = model_dir / f"{n}.weights.json"
            if not path.exists():
                raise FileNotFoundError(f"controller {n}: missing model weights {path}")
            models[n] = load_model(path)
    doc, reports, runs = pipeline.benchmark(cfg, models, out, names, args.task, args.trials)
    for key in ("task_a", "task_b"):
        for row in doc[key]:
            if not (math.isfinite(row["rmse_pos"]) and math.isfinite(row["rmse_ori"])):
                raise NumericalError(f"non-finite metrics for {row['controller']} on {row['trajectory']}")
    for key in ("task_a", "task_b"):
        for row in doc[key]:
            print(f"{row['trajectory']:18s} {row['controller']:9s} rmse_pos {row['rmse_pos']:.3f} mm  "
                  f"rmse_ori {row['rmse_ori']:.3f} deg")
    print(f"report -> {out / 'benchmark.json'}")
    return OK


def cmd_characterize(args, cfg) -> int:
    out = out_dir(args.out)
    try:
        loads = [float(s) for s in args.loads.split(",")]
    except ValueError:
        raise UsageError(f"bad --loads {args.loads!r}")
    if args.cycles < 3:
        raise UsageError("--cycles must be at least 3")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "hysteresis.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["load_g", "mean_drift_mm", "norm_area", "mean_stroke_mm"])
        for load in loads:
            drift, area, stroke = characterize_hysteresis(load, args.cycles, cfg.plant.hysteresis)
            w.writerow([repr(load), repr(drift), repr(area), repr(stroke)])
            print(f"{load:6.1f} g  drift {drift:.3f} mm  area {area:.4f}  stroke {stroke:.2f} mm")
    print(f"-> {path} ({args.cycles} cycles at full stroke)")
    return OK


def cmd_calibrate(args, cfg) -> int:
    out = out_dir(args.out)
    params, err = calibrate_hysteresis(cfg.plant.hysteresis)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"worst_relative_error": err, "params": params.__dict__,
           "reference": {str(k): v for k, v in REFERENCE_CYCLIC_STATS.items()}}
    (out / "calibration.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    print(f"worst relative error {err:.3f}; parameters -> {out / 'calibration.json'}")
    return OK


COMMANDS = {"collect": cmd_collect, "train": cmd_train, "benchmark": cmd_benchmark,
            "characterize": cmd_characterize, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"tdcrbench: error: {exc}", file=sys.stderr)
        return USAGE
    except (OSError, DatasetError) as exc:
        print(f"tdcrbench: I/O error: {exc}", file=sys.stderr)
        return IO_ERROR
    except (NumericalError, FloatingPointError, RuntimeError, ValueError) as exc:
        print(f"tdcrbench: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

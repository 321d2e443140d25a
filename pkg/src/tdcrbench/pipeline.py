"""Glue for the collect -> train -> benchmark pipeline, shared by the CLI and tests."""
from __future__ import annotations

import logging
from dataclasses import replace

from .benchmark import compute_metrics, report, run_trials, task_a, task_b
from .config import LEARNED, RunConfig
from .controllers import (FnnController, JacobianController, MpcController, RecurrentController,
                          measure_inference_latency)
from .datagen import Dataset, build_error_windows, build_windows, monte_carlo_collect, normalization, split
from .nn.model import ModelParams, init_model
from .nn.train import TrainData, ablation_grid, train
from .plant import Plant

log = logging.getLogger(__name__)


def collect(cfg: RunConfig, duration: float | None = None, rate: float | None = None) -> Dataset:
    c = cfg.collect
    duration = c.duration if duration is None else duration
    rate = c.rate if rate is None else rate
    plant = Plant(cfg.plant_config(), seed=cfg.seed).reset()
    ds = monte_carlo_collect(duration, rate, plant, cfg.seed, c.workspace, c.knot_interval, c.theta_knot, c.margin)
    ds.metadata["config_hash"] = cfg.hash()
    return split(ds, c.ratios, min_size=max(cfg.train.seq_len, cfg.controller.fnn.window + 1))


def training_arrays(ds: Dataset, arch: str, cfg: RunConfig):
    """Raw (unnormalized) train/val arrays and the matching input/output sizes."""
    if arch == "fnn":
        W = build_error_windows(ds, cfg.controller.fnn.window, cfg.controller.fnn.channels)
    else:
        W = build_windows(ds, cfg.train.seq_len, cfg.train.target)
    return W["train"], W["val"]


def prepare(ds: Dataset, arch: str, cfg: RunConfig, layers: int, hidden: int, seed: int | None = None):
    """Initialized model carrying training-split normalization, plus normalized data."""
    (Xtr, Ytr), (Xv, Yv) = training_arrays(ds, arch, cfg)
    in_size = Xtr.shape[-1]
    out_size = Ytr.shape[-1]
    seq_len = 1 if arch == "fnn" else cfg.train.seq_len
    model = init_model(arch, in_size, out_size, layers, hidden, seq_len, cfg.seed if seed is None else seed)
    model.in_mean, model.in_std, model.out_mean, model.out_std = normalization(Xtr, Ytr)
    model.metadata.update({"target": "increment" if arch == "fnn" else cfg.train.target,
                           "dataset_seed": ds.seed, "config_hash": cfg.hash()})
    if arch == "fnn":
        model.metadata["channels"] = list(cfg.controller.fnn.channels)
    data = TrainData(model.normalize_input(Xtr), model.normalize_output(Ytr),
                     model.normalize_input(Xv), model.normalize_output(Yv))
    return model, data


def layer_size(arch: str, cfg: RunConfig, layers: int | None = None, hidden: int | None = None):
    if arch == "fnn":
        return layers or cfg.train.fnn_layers, hidden or cfg.train.fnn_hidden
    return layers or cfg.train.layers, hidden or cfg.train.hidden


def train_model(ds: Dataset, arch: str, cfg: RunConfig, layers: int | None = None, hidden: int | None = None,
                epochs: int | None = None):
    layers, hidden = layer_size(arch, cfg, layers, hidden)
    model, data = prepare(ds, arch, cfg, layers, hidden)
    opt = cfg.train.optimizer
    if epochs is not None:
        opt = replace(opt, max_epochs=epochs)
    return train(model, data, opt, cfg.seed)


def run_grid(ds: Dataset, cfg: RunConfig, configs=None, epochs: int | None = None):
    configs = configs or cfg.train.grid
    opt = cfg.train.optimizer
    if epochs is not None:
        opt = replace(opt, max_epochs=epochs)
    _, data = prepare(ds, "gru", cfg, 1, 1)
    (Xtr, _), _ = training_arrays(ds, "gru", cfg)
    rows = ablation_grid(configs, data, Xtr.shape[-1], 6, cfg.train.seq_len, opt, cfg.seed)
    return rows


def make_controller(name: str, cfg: RunConfig, models: dict | None = None):
    pc = cfg.plant_config()
    c = cfg.controller
    models = models or {}
    if name == "jacobian":
        return JacobianController(pc, c.limits, c.jacobian.damping, c.jacobian.max_condition)
    if name == "mpc":
        return MpcController(pc, c.limits, c.mpc)
    if name in LEARNED and name not in models:
        raise KeyError(name)
    if name == "fnn":
        m: ModelParams = models[name]
        return FnnController(m, pc, c.limits, window=c.fnn.window,
                             channels=m.metadata.get("channels", list(c.fnn.channels)))
    if name in ("gru", "lstm"):
        ctrl = RecurrentController(models[name], pc, c.limits, past_poses=c.rnn.past_poses)
        if models[name].arch != name:
            raise ValueError(f"model for {name} has architecture {models[name].arch}")
        return ctrl
    raise ValueError(f"unknown controller {name!r}")


def trajectories(task: str):
    out = []
    if task in ("a", "all"):
        out += [("a", t) for t in task_a()]
    if task in ("b", "all"):
        out += [("b", t) for t in task_b()]
    return out


def benchmark(cfg: RunConfig, models: dict | None = None, out_dir=None, controllers=None, task: str | None = None,
              trials: int | None = None, write=True):
    """Run every selected controller on every selected trajectory; returns (doc, reports, runs)."""
    b = cfg.benchmark
    controllers = list(controllers or b.controllers)
    task = task or b.task
    trials = b.trials if trials is None else trials
    pc = cfg.plant_config()
    reports = {"a": [], "b": []}
    all_runs = []
    for idx, (which, traj) in enumerate(trajectories(task)):
        for name in controllers:
            ctrl = make_controller(name, cfg, models)
            runs = run_trials(traj, ctrl, pc, trials, rng_seed=cfg.seed * 1000 + idx, jitter=b.jitter)
            rep = compute_metrics(runs, b.error_source)
            rep.controller = name
            for r in runs:
                r.controller = name
            reports[which].append(rep)
            all_runs += runs
            log.info("%s %s rmse_pos=%.3f rmse_ori=%.3f", traj.name, name, rep.rmse_pos, rep.rmse_ori)
    latencies = {}
    for name in controllers:
        ctrl = make_controller(name, cfg, models)
        latencies[name] = measure_inference_latency(ctrl, b.latency_trials, cfg.seed)
    header = {"seed": cfg.seed, "config_hash": cfg.hash(), "trials": trials, "task": task,
              "error_source": b.error_source,
              "models": {k: {"arch": m.arch, "layers": m.layers, "hidden": m.hidden,
                             "seed": m.metadata.get("seed")} for k, m in (models or {}).items()}}
    doc = None
    if write and out_dir is not None:
        doc = report(reports["a"], reports["b"], out_dir, all_runs, header, latencies)
    else:
        doc = {"task_a": [r.row() for r in reports["a"]], "task_b": [r.row() for r in reports["b"]],
               "latency_ms": latencies, **header}
    return doc, reports, all_runs

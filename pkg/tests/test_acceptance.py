"""Acceptance criteria 1-11, one test each.

Every test records a PASS/FAIL line (printed in the terminal summary by
``conftest.py``) before asserting, so a failing criterion stays visible.
"""
import filecmp
import json
import math
import time

import numpy as np
import pytest

from conftest import random_config
from tdcrbench import pipeline
from tdcrbench.benchmark import (AXES, RunLog, compute_metrics, lissajous, nested_rectangle, run_trials,
                                 strip_latency, task_b)
from tdcrbench.cli import main
from tdcrbench.config import RunConfig
from tdcrbench.controllers import (FnnController, JacobianController, MpcConfig, MpcController,
                                   RecurrentController, jacobian_control, measure_inference_latency, mpc_control)
from tdcrbench.kinematics import ConfigSpace, Pose, SegmentGeometry, forward_kinematics, jacobian
from tdcrbench.nn.model import gru_cell, init_model, lstm_cell, zero_model
from tdcrbench.plant import REFERENCE_CYCLIC_STATS, Plant, PlantConfig, characterize_hysteresis, sensor_pose
from test_controllers import converge, reachable_targets
from test_kinematics import numeric_jacobian
from test_nn import batch, numeric_gradient_check

RESULTS = {}


def verdict(n: int, ok: bool, detail: str):
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


@pytest.fixture(scope="module")
def desk():
    """Shared 2040-sample dataset with 4x32 GRU and LSTM trained under one TrainConfig."""
    cfg = RunConfig()
    ds = pipeline.collect(cfg)
    t0 = time.perf_counter()
    models, histories = {}, {}
    for arch in ("gru", "lstm"):
        models[arch], histories[arch] = pipeline.train_model(ds, arch, cfg, 4, 32)
    return {"cfg": cfg, "ds": ds, "models": models, "histories": histories,
            "train_s": time.perf_counter() - t0}


def test_criterion_01_kinematics():
    t0 = time.perf_counter()
    g = SegmentGeometry()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        q = random_config(rng)
        Jn = numeric_jacobian(q)
        err = np.linalg.norm(jacobian(q, g) - Jn, axis=0) / np.maximum(np.linalg.norm(Jn, axis=0), 1e-6)
        worst = max(worst, float(err.max()))
    # one segment at a time: theta_i = 1e-8 against theta_i = 0
    limit = 0.0
    for d1, d2 in rng.uniform(-np.pi, np.pi, (20, 2)):
        straight = forward_kinematics(ConfigSpace(0, d1, 0, d2), g).position
        for q in (ConfigSpace(1e-8, d1, 0, d2), ConfigSpace(0, d1, 1e-8, d2)):
            limit = max(limit, float(np.linalg.norm(forward_kinematics(q, g).position - straight)))
    dt = time.perf_counter() - t0
    verdict(1, worst < 1e-5 and limit < 1e-6 and dt < 5,
            f"max rel column error {worst:.2e}, straight-limit gap {limit:.1e} mm, {dt:.2f} s")


def test_criterion_02_plant_calibration():
    t0 = time.perf_counter()
    stats = {load: characterize_hysteresis(load, 3) for load in sorted(REFERENCE_CYCLIC_STATS)}
    rel = max(abs(g - w) / w for load, ref in REFERENCE_CYCLIC_STATS.items() for g, w in zip(stats[load], ref))
    loads = sorted(stats)
    drift, area, stroke = ([stats[l][k] for l in loads] for k in range(3))
    monotone = (all(np.diff(drift) > 0) and all(np.diff(area) > 0) and all(np.diff(stroke) < 0))
    dt = time.perf_counter() - t0
    verdict(2, rel <= 0.2 and monotone and dt < 30,
            f"worst deviation {100 * rel:.1f}% of reference, monotone in load: {monotone}, {dt:.2f} s")


def test_criterion_03_sensor_model():
    plant = Plant(PlantConfig(), seed=11).reset()
    dp, do = [], []
    for _ in range(10_000):
        r = plant.step(np.zeros(6))
        dp.append(r.measured_pose.position - r.true_pose.position)
        do.append(r.measured_pose.orientation - r.true_pose.orientation)
    prmse = math.sqrt(np.mean(np.sum(np.square(dp), axis=1)))
    ormse = math.sqrt(np.mean(np.sum(np.square(do), axis=1)))
    verdict(3, abs(prmse / 0.48 - 1) <= 0.05 and abs(ormse / 0.3 - 1) <= 0.05,
            f"position RMSE {prmse:.4f} mm, orientation RMSE {ormse:.4f} deg")


def test_criterion_04_nn_engine():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        for arch in ("fnn", "lstm", "gru"):
            m = init_model(arch, 5, 3, layers=2, hidden=4, seq_len=3, seed=seed)
            for k in m.weights:
                if k.startswith("b"):
                    m.weights[k] = rng.normal(0, 0.3, m.weights[k].shape)
            X, Y = batch(arch, rng)
            worst = max(worst, numeric_gradient_check(m, X, Y, rng, probes=3))
    rng = np.random.default_rng(0)
    h, c, x = rng.normal(size=4), rng.normal(size=4), rng.normal(size=3)
    gru_ok = np.array_equal(gru_cell(x, h, zero_model("gru", 3, 1).weights, 0), 0.5 * h)
    h2, c2 = lstm_cell(x, h, c, zero_model("lstm", 3, 1).weights, 0)
    lstm_ok = np.array_equal(c2, 0.5 * c) and np.array_equal(h2, 0.5 * np.tanh(0.5 * c))
    ratio = init_model("gru", 12, 6, 4, 128).parameter_count() / init_model("lstm", 12, 6, 4, 128).parameter_count()
    dt = time.perf_counter() - t0
    verdict(4, worst < 1e-4 and gru_ok and lstm_ok and abs(ratio - 0.75) <= 0.02 and dt < 60,
            f"worst gradient rel error {worst:.1e}, zero-weight forms {gru_ok and lstm_ok}, "
            f"GRU/LSTM parameters {ratio:.4f}, {dt:.1f} s")


def test_criterion_05_training(desk):
    h = desk["histories"]
    gru, lstm = (min(r.val_loss for r in h[a]) for a in ("gru", "lstm"))
    init = {a: h[a][0].val_loss for a in h}
    ok = gru < lstm and gru < 0.5 * init["gru"] and lstm < 0.5 * init["lstm"] and desk["train_s"] < 600
    verdict(5, ok, f"4x32 validation loss GRU {gru:.4f} vs LSTM {lstm:.4f} "
                   f"(initial {init['gru']:.3f}/{init['lstm']:.3f}), {desk['train_s']:.0f} s")


def test_criterion_06_convergence():
    ideal = PlantConfig().with_ideal_actuation()
    worst = 0
    for target in reachable_targets(20, seed=6):
        for ctrl, refs in ((JacobianController(ideal), 1), (MpcController(ideal), 5)):
            k = converge(ctrl, target, 100, refs)
            worst = max(worst, 10 ** 9 if k is None else k)
    rng = np.random.default_rng(6)
    gap = 0.0
    cfg = MpcConfig(horizon=1, p_weight=0.0, iterations=1)
    for _ in range(20):
        q = ConfigSpace(rng.uniform(0.1, 1.2), rng.uniform(-3, 3), rng.uniform(0.1, 1.2), rng.uniform(-3, 3))
        m = sensor_pose(q, ideal.geometry)
        d = Pose(m.position + rng.normal(0, 1, 3), m.orientation + rng.normal(0, 1, 3))
        a, b = mpc_control([d], m, q, cfg, ideal), jacobian_control(d, m, q, ideal, damping=0.0)
        gap = max(gap, float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))))
    verdict(6, worst <= 100 and gap < 1e-6,
            f"slowest of 40 runs reached 0.05 mm in {worst} steps, MPC(N=1,P=0) vs pinv gap {gap:.1e}")


@pytest.fixture(scope="module")
def task_a_runs(desk):
    cfg, pc = desk["cfg"], desk["cfg"].plant_config()
    out = {}
    for idx, traj in enumerate((nested_rectangle(), lissajous())):
        for name in ("jacobian", "gru", "lstm"):
            ctrl = pipeline.make_controller(name, cfg, desk["models"])
            out[traj.name, name] = compute_metrics(run_trials(traj, ctrl, pc, 5, rng_seed=idx))
    return out


def test_criterion_07_benchmark_ordering(desk, task_a_runs):
    r = task_a_runs
    parts, ok = [], True
    for traj in ("nested_rectangle", "lissajous"):
        g, j = r[traj, "gru"], r[traj, "jacobian"]
        ratio = g.rmse_pos / j.rmse_pos
        ok &= ratio <= 0.7 and g.rmse_ori < j.rmse_ori
        parts.append(f"{traj} pos {g.rmse_pos:.3f}/{j.rmse_pos:.3f} mm (ratio {ratio:.2f}), "
                     f"ori {g.rmse_ori:.3f}/{j.rmse_ori:.3f} deg")
    g, l = r["nested_rectangle", "gru"], r["nested_rectangle", "lstm"]
    axes = int(np.sum(g.std <= l.std))
    ok &= axes >= 4
    verdict(7, bool(ok), "GRU/Jacobian " + "; ".join(parts) + f"; GRU STD <= LSTM on {axes}/6 axes")


def test_criterion_08_task_b(desk):
    cfg, pc = desk["cfg"], desk["cfg"].plant_config()
    rows = {}
    for idx, traj in enumerate(task_b()):
        for name in ("jacobian", "gru"):
            ctrl = pipeline.make_controller(name, cfg, desk["models"])
            rows[traj.name, name] = compute_metrics(run_trials(traj, ctrl, pc, 5, rng_seed=100 + idx))
    points = [t.name for t in task_b()]
    complete = all(len(rows[p, c].mae) == 6 and len(rows[p, c].std) == 6 for p in points for c in ("jacobian", "gru"))
    g = float(np.mean([rows[p, "gru"].rmse_ori for p in points]))
    j = float(np.mean([rows[p, "jacobian"].rmse_ori for p in points]))
    verdict(8, complete and g <= 0.7 * j,
            f"mean RMSE_ori over P1-P4 GRU {g:.3f} deg vs Jacobian {j:.3f} deg (ratio {g / j:.2f})")


def _oracle(logs):
    """Spreadsheet-style metrics: explicit loops over scored samples."""
    rows = []
    for log in logs:
        for k in range(len(log.t)):
            if log.scored[k]:
                e = []
                for a in range(6):
                    d = float(log.desired[k, a]) - float(log.actual[k, a])
                    if a >= 3:
                        while d > 180.0:
                            d -= 360.0
                        while d <= -180.0:
                            d += 360.0
                    e.append(d)
                rows.append(e)
    n = len(rows)
    mae = [sum(abs(r[a]) for r in rows) / n for a in range(6)]
    mean = [sum(r[a] for r in rows) / n for a in range(6)]
    std = [math.sqrt(sum((r[a] - mean[a]) ** 2 for r in rows) / n) for a in range(6)]
    pos = math.sqrt(sum((r[0] ** 2 + r[1] ** 2 + r[2] ** 2) / 3 for r in rows) / n)
    ori = math.sqrt(sum((r[3] ** 2 + r[4] ** 2 + r[5] ** 2) / 3 for r in rows) / n)
    return mae, std, pos, ori


def test_criterion_09_metrics_oracle():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(10):
        logs = []
        for trial in range(1 + i % 3):
            n = int(rng.integers(3, 40))
            desired = rng.normal(0, 5, (n, 6))
            desired[:, 3:] = rng.uniform(-180, 180, (n, 3))
            actual = desired + rng.normal(0, 1 + i, (n, 6))
            actual[:, 3:] = rng.uniform(-180, 180, (n, 3)) if i % 4 == 0 else actual[:, 3:]
            scored = rng.random(n) > 0.2
            scored[0] = True
            logs.append(RunLog("t", "c", trial, 0, np.arange(n) / 5.0, desired, actual, actual, np.zeros((n, 6)),
                               scored))
        rep = compute_metrics(logs)
        mae, std, pos, ori = _oracle(logs)
        got = np.concatenate([rep.mae, rep.std, [rep.rmse_pos, rep.rmse_ori]])
        want = np.concatenate([mae, std, [pos, ori]])
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))))
    verdict(9, worst <= 1e-12, f"worst deviation from the loop oracle {worst:.1e} over 10 logs")


def _pipeline_once(root, cfg_path):
    out = root / "out"
    args = ["--config", str(cfg_path)]
    assert main(args + ["collect", "--duration", "40", "--out", str(out)]) == 0
    for arch in ("gru", "lstm", "fnn"):
        assert main(args + ["train", "--arch", arch, "--out", str(out)]) == 0
    assert main(args + ["benchmark", "--task", "all", "--trials", "1", "--out", str(out)]) == 0
    return out


def _strip_table(path):
    import csv
    with path.open() as fh:
        return [{k: v for k, v in row.items() if k != "latency_ms"} for row in csv.DictReader(fh)]


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("seed = 5\n[train]\nlayers = 1\nhidden = 8\nfnn_hidden = 8\n[train.optimizer]\nmax_epochs = 3\n")
    a = _pipeline_once(tmp_path / "a", cfg)
    b = _pipeline_once(tmp_path / "b", cfg)
    exact = ["dataset.csv", "dataset.json", "gru.weights.json", "lstm.weights.json", "fnn.weights.json",
             "gru_loss.csv", "lstm_loss.csv", "fnn_loss.csv"]
    exact += sorted(p.name for p in a.glob("errors_*.csv"))
    same = [n for n in exact if filecmp.cmp(a / n, b / n, shallow=False)]
    reports = (strip_latency(json.loads((a / "benchmark.json").read_text()))
               == strip_latency(json.loads((b / "benchmark.json").read_text())))
    tables = all(_strip_table(a / t) == _strip_table(b / t) for t in ("taskA.csv", "taskB.csv"))
    ok = len(same) == len(exact) and reports and tables and len(exact) > 8
    verdict(10, ok, f"{len(same)}/{len(exact)} files byte-identical, report equal without latency: "
                    f"{reports and tables}")


def test_criterion_11_latency():
    pc = PlantConfig()
    ctrls = {
        "jacobian": JacobianController(pc),
        "mpc": MpcController(pc),
        "fnn": FnnController(init_model("fnn", 30, 6, 4, 128), pc),
        "gru": RecurrentController(init_model("gru", 12, 6, 4, 128), pc),
        "lstm": RecurrentController(init_model("lstm", 12, 6, 4, 128), pc),
    }
    ms = {name: measure_inference_latency(c, 200) for name, c in ctrls.items()}
    ok = all(math.isfinite(v) and v > 0 for v in ms.values()) and ms["fnn"] < ms["gru"] < ms["lstm"]
    verdict(11, ok, ", ".join(f"{k} {v:.3f} ms" for k, v in ms.items()))


def test_axes_cover_table_columns():
    assert len(AXES) == 6

import csv
import json

import pytest

from tdcrbench.cli import main

SMALL = """
[train]
grid = [["gru", 1, 4], ["gru", 2, 4], ["gru", 1, 8], ["lstm", 1, 4], ["lstm", 2, 4], ["lstm", 1, 8]]
hidden = 8
[train.optimizer]
max_epochs = 2
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv("TDCRBENCH_OUT", str(tmp_path / "out"))
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    return tmp_path, str(cfg)


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("collect", "train", "benchmark", "characterize", "calibrate"):
        assert cmd in out


def test_usage_errors(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["collect", "--duration", "0"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train", "--arch", "rnn"])
    assert exc.value.code == 1
    assert main(["benchmark", "--controllers", "pid"]) == 1


def test_config_error_is_usage(workdir):
    tmp, _ = workdir
    bad = tmp / "bad.toml"
    bad.write_text("nope = 1\n")
    assert main(["--config", str(bad), "collect", "--duration", "1"]) == 1


def test_missing_dataset_is_io_error(workdir, capsys):
    tmp, _ = workdir
    assert main(["train", "--dataset", str(tmp / "none.csv")]) == 2
    assert "dataset" in capsys.readouterr().err


def test_pipeline_end_to_end(workdir, capsys):
    tmp, cfg = workdir
    out = tmp / "out"
    assert main(["--config", cfg, "collect", "--duration", "40"]) == 0
    assert "train 140, val 40, test 20" in capsys.readouterr().out
    assert (out / "dataset.csv").exists() and (out / "dataset.json").exists()
    for arch in ("gru", "fnn"):
        assert main(["--config", cfg, "train", "--arch", arch]) == 0
        assert (out / f"{arch}.weights.json").exists()
        rows = list(csv.reader((out / f"{arch}_loss.csv").open()))
        assert rows[0] == ["epoch", "train_loss", "val_loss", "val_mae"] and len(rows) == 4
    assert main(["--config", cfg, "benchmark", "--controllers", "lstm"]) == 2
    assert "lstm" in capsys.readouterr().err
    assert main(["--config", cfg, "benchmark", "--task", "a", "--controllers", "jacobian,gru", "--trials", "2"]) == 0
    rows = list(csv.DictReader((out / "taskA.csv").open()))
    assert len(rows) == 4 and {r["controller"] for r in rows} == {"jacobian", "gru"}
    doc = json.loads((out / "benchmark.json").read_text())
    assert doc["seed"] == 0 and len(doc["config_hash"]) == 16 and set(doc["latency_ms"]) == {"jacobian", "gru"}
    assert (out / "errors_gru_lissajous_1.csv").exists()


def test_epochs_zero_warns(workdir, caplog):
    tmp, cfg = workdir
    assert main(["--config", cfg, "collect", "--duration", "40"]) == 0
    assert main(["--config", cfg, "train", "--arch", "lstm", "--epochs", "0"]) == 0
    assert any("epochs 0" in r.message for r in caplog.records)


def test_grid_csv(workdir):
    tmp, cfg = workdir
    assert main(["--config", cfg, "collect", "--duration", "40"]) == 0
    assert main(["--config", cfg, "train", "--grid", "--epochs", "1"]) == 0
    rows = list(csv.DictReader((tmp / "out" / "grid.csv").open()))
    assert len(rows) == 6 and [r["arch"] for r in rows] == ["gru"] * 3 + ["lstm"] * 3


def test_task_b_covers_points(workdir):
    tmp, cfg = workdir
    assert main(["--config", cfg, "benchmark", "--task", "b", "--controllers", "jacobian", "--trials", "1"]) == 0
    rows = list(csv.DictReader((tmp / "out" / "taskB.csv").open()))
    assert [r["trajectory"] for r in rows] == ["cone_P1", "cone_P2", "cone_P3", "cone_P4"]
    assert not (tmp / "out" / "taskA.csv").exists()


def test_characterize_csv(workdir):
    tmp, _ = workdir
    assert main(["characterize", "--out", str(tmp / "h")]) == 0
    rows = list(csv.reader((tmp / "h" / "hysteresis.csv").open()))
    assert rows[0] == ["load_g", "mean_drift_mm", "norm_area", "mean_stroke_mm"] and len(rows) == 4
    assert main(["characterize", "--cycles", "2"]) == 1

"""Weight files and loss-history CSVs.

Weight files are JSON; each tensor is stored as its shape plus the base64 of
its row-major little-endian float64 bytes, so a save/load round trip is
bit-exact.
"""
from __future__ import annotations

import base64
import csv
import json
from pathlib import Path

import numpy as np

from .model import ModelParams, validate_shapes

FORMAT = "tdcrbench-weights"
VERSION = 1


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(float)


def model_to_dict(model: ModelParams) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "arch": model.arch,
        "layers": model.layers,
        "hidden": model.hidden,
        "input_size": model.input_size,
        "output_size": model.output_size,
        "seq_len": model.seq_len,
        "dtype": "float64",
        "order": "row-major",
        "tensors": {k: _encode(model.weights[k]) for k in sorted(model.weights)},
        "normalization": {k: _encode(getattr(model, k)) for k in ("in_mean", "in_std", "out_mean", "out_std")},
        "metadata": model.metadata,
    }


def model_from_dict(d: dict) -> ModelParams:
    if d.get("format") != FORMAT:
        raise ValueError("not a weight file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported weight file version {d.get('version')}")
    norm = {k: _decode(v) for k, v in d["normalization"].items()}
    model = ModelParams(d["arch"], d["layers"], d["hidden"], d["input_size"], d["output_size"],
                        d["seq_len"], {k: _decode(v) for k, v in d["tensors"].items()},
                        metadata=dict(d.get("metadata", {})), **norm)
    validate_shapes(model)
    return model


def save_model(model: ModelParams, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True))
    return path


def load_model(path) -> ModelParams:
    return model_from_dict(json.loads(Path(path).read_text()))


def write_loss_history(history, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_mae"])
        for h in history:
            w.writerow([h.epoch, repr(h.train_loss), repr(h.val_loss), repr(h.val_mae)])
    return path

"""Instance files: ``<stem>.csv`` holds Y row-major, ``<stem>.json`` the truth."""

from __future__ import annotations

import json
import os

import numpy as np

from app.model import Instance, ModelParams

CSV_FORMAT = "%.17g"


def instance_paths(stem: str) -> tuple[str, str]:
    return f"{stem}.csv", f"{stem}.json"


def save_instance(inst: Instance, stem: str) -> tuple[str, str]:
    csv_path, json_path = instance_paths(stem)
    directory = os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(directory, exist_ok=True)
    np.savetxt(csv_path, inst.Y, fmt=CSV_FORMAT, delimiter=",")
    truth = {
        "params": inst.params.as_dict(),
        "seed": inst.seed,
        "mu": [[float(v) for v in row] for row in inst.mu],
        "kstar": [int(k) for k in inst.kstar],
        "b": [int(s) for s in inst.b],
    }
    with open(json_path, "w") as f:
        json.dump(truth, f, indent=2, sort_keys=True)
        f.write("\n")
    return csv_path, json_path


def load_instance(stem: str) -> Instance:
    csv_path, json_path = instance_paths(stem)
    with open(json_path, "r") as f:
        truth = json.load(f)
    params = ModelParams(**truth["params"])
    Y = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    return Instance(
        Y=Y,
        mu=np.asarray(truth["mu"], dtype=float).reshape(params.K, params.d),
        kstar=np.asarray(truth["kstar"], dtype=np.int64),
        b=np.asarray(truth["b"], dtype=np.int64),
        params=params,
        seed=truth.get("seed"),
    )


__all__ = ["save_instance", "load_instance", "instance_paths"]

"""Result files.

* CSV: RFC 4180 with ``\\r\\n`` line ends, ``.`` decimal point, floats in ``repr`` form.
* JSON: sorted keys, two-space indent, trailing newline; NumPy values converted.
* Fields: long-form CSV ``t, x, value``; binary NumPy ``.npy`` (format version 1.0, little-endian float64, C order)
  holding the ``(n_nodes, n_times)`` value array; coordinates and times go to a JSON
  sidecar with the same stem.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from .dn_map import DNRecord

__all__ = [
    "to_jsonable",
    "write_json",
    "read_json",
    "write_csv",
    "write_field",
    "read_field",
    "write_records",
    "read_records",
    "update_manifest",
]


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def write_field(stem, x, field) -> list[Path]:
    """``stem.csv`` (long form, columns ``t, x, value``, time-major), ``stem.npy`` and ``stem.json``."""
    stem = Path(stem)
    values = np.ascontiguousarray(field.values, dtype="<f8")
    rows = ((float(t), float(xi), values[i, k]) for k, t in enumerate(field.t) for i, xi in enumerate(x))
    paths = [write_csv(stem.with_suffix(".csv"), ["t", "x", "value"], rows)]
    np.save(stem.with_suffix(".npy"), values, allow_pickle=False)
    paths.append(stem.with_suffix(".npy"))
    paths.append(write_json(stem.with_suffix(".json"), {"x": x, "t": field.t, "tag": field.tag, "shape": list(values.shape), "meta": field.meta}))
    return paths


def read_field(stem):
    from .forward import SpaceTimeField

    stem = Path(stem)
    side = read_json(stem.with_suffix(".json"))
    values = np.load(stem.with_suffix(".npy"), allow_pickle=False)
    return np.asarray(side["x"]), SpaceTimeField(values, np.asarray(side["t"]), side["tag"], side["meta"])


def write_records(stem, records: list[DNRecord]) -> list[Path]:
    stem = Path(stem)
    paths = [write_json(stem.with_suffix(".json"), [r.to_dict() for r in records])]
    rows = ([r.datum, r.test, r.h, r.T0, r.pairing] for r in records)
    paths.append(write_csv(stem.with_suffix(".csv"), ["datum", "test", "h", "T0", "pairing"], rows))
    return paths


def read_records(path) -> list[DNRecord]:
    data = read_json(path)
    return [DNRecord(d["datum"], d["test"], float(d["h"]), float(d["T0"]), float(d["pairing"]), d.get("meta", {})) for d in data]


def update_manifest(run_dir, cfg, stage: str, paths, seconds: float, checks: dict, version: str) -> Path:
    """Merge one stage entry into ``run_dir/manifest.json``."""
    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json"
    man = read_json(mpath) if mpath.exists() else {}
    man.update({"config_hash": cfg.hash(), "version": version, "python": platform.python_version(), "numpy": np.__version__})
    stages = man.setdefault("stages", {})
    stages[stage] = {
        "outputs": sorted(str(Path(p).relative_to(run_dir)) for p in paths),
        "wall_clock_s": round(float(seconds), 3),
        "checks": checks,
        "passed": all(bool(v.get("passed", True)) if isinstance(v, dict) else bool(v) for v in checks.values()),
    }
    return write_json(mpath, man)

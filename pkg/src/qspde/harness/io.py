"""Artifact writing, provenance stamps and streaming statistics."""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np


def code_version() -> str:
    try:
        return f"qspde {metadata.version('qspde')}"
    except metadata.PackageNotFoundError:
        from .. import __version__
        return f"qspde {__version__}"


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan literals
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def atomic_write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, to_json(obj))


def config_hash(values: dict) -> str:
    blob = json.dumps(_jsonable(values), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunningStats:
    """Welford's one-pass mean and variance."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    minimum: float = math.inf
    maximum: float = -math.inf

    def push(self, x: float) -> None:
        x = float(x)
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)
        self.minimum = min(self.minimum, x)
        self.maximum = max(self.maximum, x)

    def extend(self, xs) -> "RunningStats":
        for x in xs:
            self.push(x)
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def summarize(records: list[dict], quantiles=(0.05, 0.5, 0.95)) -> dict:
    """Aggregate every finite numeric field across per-replica records."""
    keys = sorted({k for r in records for k, v in r.items()
                   if isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)
                   and k != "replica"})
    out = {}
    for key in keys:
        xs = [float(r[key]) for r in records if key in r]
        finite = [x for x in xs if math.isfinite(x)]
        stats = RunningStats().extend(finite)
        entry = {"count": stats.count, "non_finite": len(xs) - len(finite), "mean": stats.mean,
                 "std": stats.std, "min": stats.minimum, "max": stats.maximum}
        if finite:
            qs = np.quantile(np.array(finite), quantiles)
            entry["quantiles"] = {f"{q:g}": float(v) for q, v in zip(quantiles, qs)}
        out[key] = entry
    return out

"""Run reports: scalar time series, fitted quantities and snapshots of one run."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import write_snapshot, write_table


def content_hash(obj) -> str:
    """SHA-256 of the canonical JSON encoding of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, default=_json_default, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if hasattr(o, "as_dict"):
        return o.as_dict()
    raise TypeError(f"cannot serialize {type(o).__name__}")


@dataclass
class RunReport:
    """Diagnostics of a single run.

    ``series`` maps a column name to values recorded at ``times``; rows
    missing a column hold NaN. ``fits`` stores fitted rates, windows and their
    R^2; ``checks`` stores named pass/fail assertions made during the run.
    """

    name: str
    config: dict = field(default_factory=dict)
    times: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.meta.setdefault("config_hash", content_hash(self.config))

    def record(self, t: float, **values) -> None:
        if len(self.times) >= 2:
            direction = np.sign(self.times[-1] - self.times[0])
            if direction and np.sign(t - self.times[-1]) == -direction:
                raise ValueError("time stamps must be monotone")
        n = len(self.times)
        self.times.append(float(t))
        for key in values:
            if key not in self.series:
                self.series[key] = [np.nan] * n
        for key, col in self.series.items():
            col.append(float(values.get(key, np.nan)))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name], float)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, float)

    def check(self, name: str, passed: bool, **detail) -> bool:
        self.checks[name] = {"passed": bool(passed), **detail}
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_csv(self, path) -> Path:
        cols = {"time": self.times}
        cols.update(self.series)
        return write_table(path, cols)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "config": self.config,
            "fits": self.fits,
            "checks": self.checks,
            "meta": self.meta,
            "snapshots": [s.meta.get("path", f"snapshot_{i:04d}.kpf") for i, s in enumerate(self.snapshots)],
        }

    def write(self, directory) -> Path:
        """Write series.csv, report.json and KPF1 snapshots into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        if self.times:
            self.to_csv(d / "series.csv")
        for i, snap in enumerate(self.snapshots):
            name = f"snapshot_{i:04d}.kpf"
            write_snapshot(d / name, snap)
            snap.meta["path"] = name
        with open(d / "report.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, default=_json_default)
        return d


def fit_exponential(t, values, window=None) -> dict:
    """Least-squares fit of log(values) = a + rate * t; returns rate, R^2 and the window used."""
    t = np.asarray(t, float)
    v = np.asarray(values, float)
    sel = np.isfinite(v) & (v > 0)
    if window is not None:
        sel &= window
    tt, lv = t[sel], np.log(v[sel])
    if tt.size < 2:
        return {"rate": np.nan, "r2": 0.0, "samples": int(tt.size), "t0": np.nan, "t1": np.nan}
    A = np.column_stack([np.ones_like(tt), tt])
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return {
        "rate": float(coef[1]),
        "intercept": float(coef[0]),
        "r2": r2,
        "samples": int(tt.size),
        "t0": float(tt.min()),
        "t1": float(tt.max()),
    }

"""JSON-lines run logs: odometry, scans, ground truth, estimates, warnings.

One record per line, `t` non-decreasing. Unknown record types are skipped
with a warning so logs stay forward-compatible.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform2D
from .particle_filter import LaserScan

log = logging.getLogger(__name__)


@dataclass
class OdomRecord:
    t: float
    x: float
    y: float
    yaw: float

    kind = "odom"

    def transform(self) -> Transform2D:
        return Transform2D(self.x, self.y, self.yaw)

    def to_json(self) -> dict:
        return {"t": self.t, "type": "odom", "x": self.x, "y": self.y, "yaw": self.yaw}


@dataclass
class GroundTruthRecord:
    t: float
    x: float
    y: float
    yaw: float

    kind = "gt"

    def transform(self) -> Transform2D:
        return Transform2D(self.x, self.y, self.yaw)

    def to_json(self) -> dict:
        return {"t": self.t, "type": "gt", "x": self.x, "y": self.y, "yaw": self.yaw}


@dataclass
class ScanRecord:
    t: float
    angle_min: float
    angle_inc: float
    range_max: float
    ranges: list[float]

    kind = "scan"

    def to_scan(self) -> LaserScan:
        return LaserScan(self.t, self.angle_min, self.angle_inc, self.range_max,
                         np.asarray(self.ranges, dtype=float))

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "type": "scan",
            "angle_min": self.angle_min,
            "angle_inc": self.angle_inc,
            "range_max": self.range_max,
            "ranges": list(self.ranges),
        }


@dataclass
class EstimateRecord:
    t: float
    x: float
    y: float
    yaw: float
    cov: list[float]  # 3x3 row-major
    quality: float
    n_hyp: int
    hyp_id: int
    cpu_s: float | None = field(default=None, compare=False)

    kind = "estimate"

    def transform(self) -> Transform2D:
        return Transform2D(self.x, self.y, self.yaw)

    def covariance(self) -> np.ndarray:
        return np.asarray(self.cov, dtype=float).reshape(3, 3)

    def to_json(self, include_cpu: bool = False) -> dict:
        out = {
            "t": self.t,
            "type": "estimate",
            "x": self.x,
            "y": self.y,
            "yaw": self.yaw,
            "cov": list(self.cov),
            "quality": self.quality,
            "n_hyp": self.n_hyp,
            "hyp_id": self.hyp_id,
        }
        # Wall-clock timing is opt-in: it would break byte-level reproducibility.
        if include_cpu and self.cpu_s is not None:
            out["cpu_s"] = self.cpu_s
        return out


@dataclass
class WarningRecord:
    t: float
    message: str

    kind = "warning"

    def to_json(self) -> dict:
        return {"t": self.t, "type": "warning", "message": self.message}


def record_from_json(obj: dict):
    """Build a typed record from one parsed JSON object; None if unknown type."""
    kind = obj.get("type")
    if kind == "odom":
        return OdomRecord(float(obj["t"]), float(obj["x"]), float(obj["y"]), float(obj["yaw"]))
    if kind == "gt":
        return GroundTruthRecord(float(obj["t"]), float(obj["x"]), float(obj["y"]),
                                 float(obj["yaw"]))
    if kind == "scan":
        return ScanRecord(float(obj["t"]), float(obj["angle_min"]), float(obj["angle_inc"]),
                          float(obj["range_max"]), [float(r) for r in obj["ranges"]])
    if kind == "estimate":
        cpu = obj.get("cpu_s")
        return EstimateRecord(float(obj["t"]), float(obj["x"]), float(obj["y"]),
                              float(obj["yaw"]), [float(c) for c in obj["cov"]],
                              float(obj["quality"]), int(obj["n_hyp"]), int(obj["hyp_id"]),
                              None if cpu is None else float(cpu))
    if kind == "warning":
        return WarningRecord(float(obj["t"]), str(obj.get("message", "")))
    return None


def read_records(path) -> list:
    """Parse a JSON-lines log; unknown record types are skipped with a warning."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            record = record_from_json(obj)
            if record is None:
                log.warning("%s:%d: skipping unknown record type %r",
                            path, lineno, obj.get("type"))
                continue
            records.append(record)
    return records


def write_records(path, records, include_cpu: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            if isinstance(record, EstimateRecord):
                obj = record.to_json(include_cpu=include_cpu)
            else:
                obj = record.to_json()
            f.write(json.dumps(obj) + "\n")


def split_by_kind(records) -> dict[str, list]:
    out: dict[str, list] = {}
    for record in records:
        out.setdefault(record.kind, []).append(record)
    return out

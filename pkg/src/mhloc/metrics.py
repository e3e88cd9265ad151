"""Evaluation over run logs: error series against interpolated ground truth,
recovery detection, the uncertainty scalar, and CSV/JSON reporting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PoseEstimate, TimedTransformBuffer, angle_diff

CSV_HEADER = "t,pos_err,yaw_err,quality,uncertainty,n_hyp,cpu_s"


def uncertainty(estimate: PoseEstimate) -> float:
    """Positional uncertainty: sqrt of the largest eigenvalue of the xy block."""
    cov = np.asarray(estimate.covariance, dtype=float)[:2, :2]
    eigs = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if eigs.min() < -1e-9:
        raise ValueError(f"covariance is not PSD (eigenvalue {eigs.min()})")
    return float(math.sqrt(max(eigs.max(), 0.0)))


@dataclass
class ErrorSeries:
    """Per-estimate evaluation samples, time-ordered."""

    t: np.ndarray = field(default_factory=lambda: np.empty(0))
    pos_err: np.ndarray = field(default_factory=lambda: np.empty(0))
    yaw_err: np.ndarray = field(default_factory=lambda: np.empty(0))
    quality: np.ndarray = field(default_factory=lambda: np.empty(0))
    uncertainty: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_hyp: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    cpu_s: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self) -> int:
        return self.t.size

    def slice_from(self, t_start: float) -> "ErrorSeries":
        """Samples with t >= t_start."""
        keep = self.t >= t_start
        return ErrorSeries(self.t[keep], self.pos_err[keep], self.yaw_err[keep],
                           self.quality[keep], self.uncertainty[keep],
                           self.n_hyp[keep], self.cpu_s[keep])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(CSV_HEADER + "\n")
            for i in range(len(self)):
                f.write(
                    f"{self.t[i]:.6f},{self.pos_err[i]:.6f},{self.yaw_err[i]:.6f},"
                    f"{self.quality[i]:.6f},{self.uncertainty[i]:.6f},"
                    f"{int(self.n_hyp[i])},{self.cpu_s[i]:.6f}\n"
                )

    @staticmethod
    def from_csv(path) -> "ErrorSeries":
        data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
        if data.size == 0:
            return ErrorSeries()
        return ErrorSeries(data[:, 0], data[:, 1], data[:, 2], data[:, 3],
                           data[:, 4], data[:, 5].astype(np.int64), data[:, 6])


def trajectory_error(estimates, ground_truth) -> tuple[ErrorSeries, dict]:
    """Match each estimate to interpolated ground truth at its timestamp.

    estimates: sequence of EstimateRecord; ground_truth: sequence of
    GroundTruthRecord. Returns the error series plus a summary dict with
    mean/std/median position error. Estimates outside the ground-truth span
    are dropped; if nothing overlaps, raises ValueError.
    """
    if not ground_truth:
        raise ValueError("no ground truth records")
    if not estimates:
        raise ValueError("no estimate records")
    buffer = TimedTransformBuffer()
    for record in ground_truth:
        buffer.insert(record.t, record.transform())
    lo, hi = buffer.span()

    rows = {k: [] for k in ("t", "pos", "yaw", "q", "u", "n", "cpu")}
    for est in estimates:
        if est.t < lo or est.t > hi:
            continue
        gt = buffer.lookup(est.t)
        rows["t"].append(est.t)
        rows["pos"].append(math.hypot(est.x - gt.x, est.y - gt.y))
        rows["yaw"].append(abs(angle_diff(est.yaw, gt.yaw)))
        rows["q"].append(est.quality)
        rows["u"].append(uncertainty(PoseEstimate(est.transform(), est.covariance())))
        rows["n"].append(est.n_hyp)
        rows["cpu"].append(est.cpu_s if est.cpu_s is not None else 0.0)
    if not rows["t"]:
        raise ValueError("estimates and ground truth do not overlap in time")

    series = ErrorSeries(
        np.asarray(rows["t"]), np.asarray(rows["pos"]), np.asarray(rows["yaw"]),
        np.asarray(rows["q"]), np.asarray(rows["u"]),
        np.asarray(rows["n"], dtype=np.int64), np.asarray(rows["cpu"]),
    )
    summary = {
        "samples": len(series),
        "mean": float(series.pos_err.mean()),
        "std": float(series.pos_err.std()),
        "median": float(np.median(series.pos_err)),
    }
    return series, summary


def recovery_time(series: ErrorSeries, threshold: float, hold: float) -> float | None:
    """Seconds from series start until the error stays below threshold.

    The qualifying instant must keep every sample within [t, t + hold] below
    threshold, and the series must actually extend through that window.
    Returns None when the run never recovers.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if hold < 0:
        raise ValueError("hold must be >= 0")
    if len(series) == 0:
        return None
    t = series.t
    below = series.pos_err < threshold
    t_end = t[-1]
    for i in range(len(series)):
        if not below[i]:
            continue
        if t[i] + hold > t_end + 1e-9:
            break
        window = (t >= t[i]) & (t <= t[i] + hold + 1e-9)
        if below[window].all():
            return float(t[i] - t[0])
    return None


def phase_stats(series: ErrorSeries, threshold: float) -> dict:
    """Mean quality and uncertainty split by correct / incorrect phases.

    A sample is "correct" when its position error is below threshold.
    """
    correct = series.pos_err < threshold
    out = {}
    for name, mask in (("correct", correct), ("incorrect", ~correct)):
        if mask.any():
            out[f"quality_{name}_mean"] = float(series.quality[mask].mean())
            out[f"uncertainty_{name}_mean"] = float(series.uncertainty[mask].mean())
            out[f"samples_{name}"] = int(mask.sum())
        else:
            out[f"quality_{name}_mean"] = None
            out[f"uncertainty_{name}_mean"] = None
            out[f"samples_{name}"] = 0
    return out


def write_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")

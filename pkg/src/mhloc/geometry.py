"""Planar rigid-body transforms, a timestamped transform buffer, and
weighted pose statistics.

Everything here is SE(2): poses are (x, y, yaw) with yaw normalized to
(-pi, pi]. Angles are interpolated and differenced along the shortest arc.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def angle_diff(a: float, b: float) -> float:
    """Shortest-arc difference a - b, in (-pi, pi]."""
    return normalize_angle(a - b)


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized normalize_angle; values already in (-pi, pi] pass unchanged."""
    a = np.asarray(a, dtype=float)
    out_of_range = (a > np.pi) | (a <= -np.pi)
    if not out_of_range.any():
        return a
    wrapped = np.arctan2(np.sin(a), np.cos(a))
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return np.where(out_of_range, wrapped, a)


@dataclass(frozen=True)
class Transform2D:
    """A planar rigid transform / pose: translation (x, y) and rotation yaw."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @staticmethod
    def identity() -> "Transform2D":
        return Transform2D(0.0, 0.0, 0.0)

    def compose(self, other: "Transform2D") -> "Transform2D":
        """Return self * other (apply other in self's frame)."""
        c = math.cos(self.yaw)
        s = math.sin(self.yaw)
        return Transform2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )

    def invert(self) -> "Transform2D":
        c = math.cos(self.yaw)
        s = math.sin(self.yaw)
        return Transform2D(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)

    def apply(self, px: float, py: float) -> tuple[float, float]:
        """Transform a point from this frame into the parent frame."""
        c = math.cos(self.yaw)
        s = math.sin(self.yaw)
        return self.x + c * px - s * py, self.y + s * px + c * py

    def translation_norm(self) -> float:
        return math.hypot(self.x, self.y)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


def compose(a: Transform2D, b: Transform2D) -> Transform2D:
    return a.compose(b)


def invert(t: Transform2D) -> Transform2D:
    return t.invert()


def interpolate(a: Transform2D, b: Transform2D, frac: float) -> Transform2D:
    """Interpolate between two transforms: linear in x/y, shortest arc in yaw."""
    return Transform2D(
        a.x + frac * (b.x - a.x),
        a.y + frac * (b.y - a.y),
        a.yaw + frac * angle_diff(b.yaw, a.yaw),
    )


class TimedTransformBuffer:
    """Time-ordered history of one frame pair's transform (e.g. odom->base).

    Insertions must have strictly increasing timestamps. Lookups anywhere
    inside the stored interval interpolate; outside it they raise. A single
    writer and any number of readers may run concurrently; a lock keeps
    every read a consistent snapshot.
    """

    def __init__(self, capacity: float | None = None):
        """capacity: maximum retained duration in seconds (None = unbounded)."""
        self.capacity = capacity
        self._stamps: list[float] = []
        self._transforms: list[Transform2D] = []
        self._lock = threading.Lock()

    def insert(self, stamp: float, transform: Transform2D) -> None:
        with self._lock:
            if self._stamps and stamp <= self._stamps[-1]:
                raise ValueError(
                    f"timestamp {stamp} not after last stored {self._stamps[-1]}"
                )
            self._stamps.append(stamp)
            self._transforms.append(transform)
            if self.capacity is not None:
                cutoff = stamp - self.capacity
                # Keep one sample at or before the cutoff so the whole
                # retained window stays interpolable.
                drop = 0
                while drop + 1 < len(self._stamps) and self._stamps[drop + 1] <= cutoff:
                    drop += 1
                if drop:
                    del self._stamps[:drop]
                    del self._transforms[:drop]

    def span(self) -> tuple[float, float]:
        with self._lock:
            if not self._stamps:
                raise ValueError("empty transform buffer")
            return self._stamps[0], self._stamps[-1]

    def __len__(self) -> int:
        with self._lock:
            return len(self._stamps)

    def lookup(self, t: float) -> Transform2D:
        """Interpolated transform at time t; t must be inside the stored span."""
        with self._lock:
            if not self._stamps:
                raise ValueError("empty transform buffer")
            lo, hi = self._stamps[0], self._stamps[-1]
            if t < lo or t > hi:
                raise ValueError(f"time {t} outside buffered span [{lo}, {hi}]")
            i = bisect.bisect_left(self._stamps, t)
            if i < len(self._stamps) and self._stamps[i] == t:
                return self._transforms[i]
            a_t, b_t = self._stamps[i - 1], self._stamps[i]
            frac = (t - a_t) / (b_t - a_t)
            return interpolate(self._transforms[i - 1], self._transforms[i], frac)

    def delta(self, t0: float, t1: float) -> Transform2D:
        """Relative motion between two times: lookup(t0)^-1 * lookup(t1)."""
        if t1 < t0:
            raise ValueError(f"t0 {t0} must not exceed t1 {t1}")
        return self.lookup(t0).invert().compose(self.lookup(t1))


def lookup_interpolated(buffer: TimedTransformBuffer, t: float) -> Transform2D:
    return buffer.lookup(t)


def odom_delta(buffer: TimedTransformBuffer, t0: float, t1: float) -> Transform2D:
    """Displacement between two odometry stamps, interpolating each endpoint."""
    return buffer.delta(t0, t1)


@dataclass
class PoseEstimate:
    """Gaussian pose summary: mean transform and 3x3 (x, y, yaw) covariance."""

    mean: Transform2D
    covariance: np.ndarray  # 3x3, symmetric PSD

    def __post_init__(self):
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(3, 3)


def weighted_mean_cov(particles) -> PoseEstimate:
    """Weighted mean and covariance of (Transform2D, weight) pairs.

    The yaw mean is circular (resultant-vector direction) and yaw deviations
    are taken along the shortest arc. Covariance is the weighted population
    covariance, invariant to uniform weight scaling.
    """
    poses = []
    weights = []
    for pose, w in particles:
        poses.append(pose.as_tuple())
        weights.append(w)
    return weighted_mean_cov_arrays(np.asarray(poses, float), np.asarray(weights, float))


def weighted_mean_cov_arrays(poses: np.ndarray, weights: np.ndarray) -> PoseEstimate:
    """Array form of weighted_mean_cov: poses (N, 3), weights (N,)."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if poses.shape[0] == 0:
        raise ValueError("no particles")
    if np.any(weights < 0):
        raise ValueError("negative weight")
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError("all weights are zero")
    w = weights / total

    mx = float(w @ poses[:, 0])
    my = float(w @ poses[:, 1])
    myaw = math.atan2(float(w @ np.sin(poses[:, 2])), float(w @ np.cos(poses[:, 2])))
    mean = Transform2D(mx, my, myaw)

    dev = np.empty_like(poses)
    dev[:, 0] = poses[:, 0] - mx
    dev[:, 1] = poses[:, 1] - my
    dyaw = poses[:, 2] - myaw
    dev[:, 2] = np.arctan2(np.sin(dyaw), np.cos(dyaw))
    cov = (w[:, None] * dev).T @ dev
    return PoseEstimate(mean, cov)

"""Ground-truth world simulator: scripted trajectories on an occupancy grid,
raycast laser scans, drifting odometry, and kidnap events, all written out
as a replayable run log.

Odometry drift is modeled as per-run systematic rates (sampled once from the
configured noise scales), so the accumulated error grows linearly with
distance traveled, which is what wheel odometry does in practice. Kidnaps
teleport the ground truth while the odometry stream stays continuous.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform2D, interpolate
from .gridmap import FREE, OCCUPIED, OccupancyGrid
from .particle_filter import LaserScan, MotionNoiseParams
from .runlog import GroundTruthRecord, OdomRecord, ScanRecord


class ScenarioError(ValueError):
    """Raised when a scenario script is inconsistent with the map."""


@dataclass
class SensorSpec:
    """Planar range scanner description, including its mount on the base."""

    beam_count: int = 90
    angle_min: float = -math.pi
    angle_increment: float = 2.0 * math.pi / 90
    range_max: float = 12.0
    range_noise_std: float = 0.0
    mount: Transform2D = field(default_factory=Transform2D.identity)

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be >= 1")
        if self.range_max <= 0:
            raise ValueError("range_max must be > 0")

    def angles(self) -> np.ndarray:
        return self.angle_min + self.angle_increment * np.arange(self.beam_count)


@dataclass
class ScenarioScript:
    """Timed pose waypoints, kidnap events, and the recording rates."""

    waypoints: list[tuple[float, Transform2D]]
    kidnaps: list[tuple[float, Transform2D]] = field(default_factory=list)
    odom_noise: MotionNoiseParams = field(default_factory=MotionNoiseParams)
    odom_hz: float = 50.0
    scan_hz: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ScenarioError("scenario needs at least one waypoint")
        times = [t for t, _ in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("waypoint times must be strictly increasing")
        kidnap_times = [t for t, _ in self.kidnaps]
        if any(b <= a for a, b in zip(kidnap_times, kidnap_times[1:])):
            raise ScenarioError("kidnap times must be strictly increasing")
        if self.odom_hz <= 0 or self.scan_hz <= 0:
            raise ScenarioError("rates must be positive")


def scan_raycast(grid: OccupancyGrid, laser_pose: Transform2D, spec: SensorSpec,
                 rng: np.random.Generator | None = None) -> LaserScan:
    """Simulate one scan: march each beam at half-cell steps to the first
    occupied cell (or range_max), then add clamped Gaussian range noise.

    Beams that hit nothing report exactly range_max.
    """
    angles = spec.angles()
    half_step = grid.resolution / 2.0
    n_steps = int(math.floor(spec.range_max / half_step)) + 1
    d = np.arange(n_steps) * half_step
    directions = laser_pose.yaw + angles
    px = laser_pose.x + d[None, :] * np.cos(directions)[:, None]
    py = laser_pose.y + d[None, :] * np.sin(directions)[:, None]

    inv = grid.origin.invert()
    c = math.cos(inv.yaw)
    s = math.sin(inv.yaw)
    lx = inv.x + c * px - s * py
    ly = inv.y + s * px + c * py
    col = np.floor(lx / grid.resolution).astype(np.int64)
    row = np.floor(ly / grid.resolution).astype(np.int64)
    inside = (col >= 0) & (col < grid.width) & (row >= 0) & (row < grid.height)
    occupied = inside & (grid.cells[np.where(inside, row, 0), np.where(inside, col, 0)] == OCCUPIED)

    hit = occupied.any(axis=1)
    first = occupied.argmax(axis=1)
    ranges = np.where(hit, first * half_step, spec.range_max)
    if rng is not None and spec.range_noise_std > 0:
        noise = rng.normal(0.0, spec.range_noise_std, angles.size)
        ranges = np.where(hit, np.clip(ranges + noise, 0.0, spec.range_max), ranges)
    return LaserScan(0.0, spec.angle_min, spec.angle_increment, spec.range_max, ranges)


class _Trajectory:
    """Piecewise-linear scripted pose (position linear, yaw shortest-arc)."""

    def __init__(self, waypoints: list[tuple[float, Transform2D]]):
        self.times = [t for t, _ in waypoints]
        self.poses = [p for _, p in waypoints]

    def pose(self, t: float) -> Transform2D:
        if t <= self.times[0]:
            return self.poses[0]
        if t >= self.times[-1]:
            return self.poses[-1]
        i = bisect.bisect_right(self.times, t)
        frac = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1])
        return interpolate(self.poses[i - 1], self.poses[i], frac)


def _require_free(grid: OccupancyGrid, pose: Transform2D, what: str) -> None:
    value = grid.occupancy_at(pose.x, pose.y)
    if value != FREE:
        raise ScenarioError(
            f"{what} at ({pose.x:.3f}, {pose.y:.3f}) is not in free space"
        )


def simulate(grid: OccupancyGrid, script: ScenarioScript, spec: SensorSpec,
             rng_motion: np.random.Generator | None = None,
             rng_sensor: np.random.Generator | None = None) -> list:
    """Run the scenario and return time-ordered odom/gt/scan records.

    Ground truth follows the waypoints; kidnap events re-anchor it while the
    scripted relative motion continues from the new pose. Odometry integrates
    the true body-frame motion plus the systematic drift sampled from
    script.odom_noise, and is therefore continuous across kidnaps.
    """
    for _, pose in script.waypoints:
        _require_free(grid, pose, "waypoint")
    for _, pose in script.kidnaps:
        _require_free(grid, pose, "kidnap target")

    if rng_motion is None:
        rng_motion = np.random.default_rng(np.random.SeedSequence([script.seed, 0]))
    if rng_sensor is None:
        rng_sensor = np.random.default_rng(np.random.SeedSequence([script.seed, 3]))

    noise = script.odom_noise
    drift_x = rng_motion.normal(0.0, 1.0) * noise.trans_per_meter
    drift_y = rng_motion.normal(0.0, 1.0) * noise.trans_per_meter
    drift_yaw_per_rad = rng_motion.normal(0.0, 1.0) * noise.yaw_per_rad
    drift_yaw_per_meter = rng_motion.normal(0.0, 1.0) * noise.yaw_per_meter

    traj = _Trajectory(script.waypoints)
    t0 = script.waypoints[0][0]
    t_end = script.waypoints[-1][0]
    odom_dt = 1.0 / script.odom_hz
    scan_dt = 1.0 / script.scan_hz
    n_odom = int(math.floor((t_end - t0) * script.odom_hz + 1e-9)) + 1
    n_scan = int(math.floor((t_end - t0) * script.scan_hz + 1e-9)) + 1

    events = [(t0 + k * odom_dt, 0, k) for k in range(n_odom)]
    events += [(t0 + k * scan_dt, 2, k) for k in range(n_scan)]
    events.sort(key=lambda e: (e[0], e[1]))

    kidnaps = list(script.kidnaps)
    offset = Transform2D.identity()
    odom = Transform2D.identity()
    prev_script_pose = traj.pose(t0)
    records = []

    for t, kind, _idx in events:
        while kidnaps and kidnaps[0][0] <= t:
            tk, target = kidnaps.pop(0)
            offset = target.compose(traj.pose(tk).invert())
        script_pose = traj.pose(t)
        gt = offset.compose(script_pose)

        if kind == 0:
            du = prev_script_pose.invert().compose(script_pose)
            d_trans = du.translation_norm()
            d_yaw = abs(du.yaw)
            e = Transform2D(
                du.x + drift_x * d_trans,
                du.y + drift_y * d_trans,
                du.yaw + drift_yaw_per_rad * d_yaw + drift_yaw_per_meter * d_trans,
            )
            odom = odom.compose(e)
            prev_script_pose = script_pose
            records.append(OdomRecord(t, odom.x, odom.y, odom.yaw))
            records.append(GroundTruthRecord(t, gt.x, gt.y, gt.yaw))
        else:
            laser_pose = gt.compose(spec.mount)
            scan = scan_raycast(grid, laser_pose, spec, rng_sensor)
            records.append(ScanRecord(t, spec.angle_min, spec.angle_increment,
                                      spec.range_max, [float(r) for r in scan.ranges]))
    return records

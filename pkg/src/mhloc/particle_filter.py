"""One localization population: particles with pose, weight, and hit count,
plus the prediction / correction / reseed / adapt operations that update it.

Weights are accumulated in log space during correction and renormalized to
sum to 1 afterwards, so many-beam scans cannot underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PoseEstimate, Transform2D, weighted_mean_cov_arrays, wrap_angles
from .gridmap import OccupancyGrid, beam_errors_batch

LOG_SQRT_TWO_PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class MotionNoiseParams:
    """Std-dev scales for odometry noise, per unit of displacement.

    trans_per_meter: translation noise (m) per meter translated, each axis.
    yaw_per_rad: rotation noise (rad) per radian rotated.
    yaw_per_meter: rotation noise (rad) per meter translated (cross term).
    """

    trans_per_meter: float = 0.0
    yaw_per_rad: float = 0.0
    yaw_per_meter: float = 0.0

    def __post_init__(self):
        if min(self.trans_per_meter, self.yaw_per_rad, self.yaw_per_meter) < 0:
            raise ValueError("motion noise scales must be >= 0")


@dataclass
class SensorModelParams:
    """Beam likelihood parameters.

    sigma is the range accuracy (m); a beam counts as a hit when its error
    stays within hit_threshold_factor * sigma. Beams with non-finite,
    non-positive, or >= max_usable_range readings are skipped, and only
    every beam_stride-th beam is evaluated.
    """

    sigma: float = 0.05
    hit_threshold_factor: float = 2.0
    max_usable_range: float = 20.0
    beam_stride: int = 1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.hit_threshold_factor <= 0:
            raise ValueError("hit_threshold_factor must be > 0")
        if self.beam_stride < 1:
            raise ValueError("beam_stride must be >= 1")


@dataclass
class LaserScan:
    """One planar range scan; beam j sits at angle_min + j * angle_increment."""

    stamp: float
    angle_min: float
    angle_increment: float
    range_max: float
    ranges: np.ndarray

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float).reshape(-1)
        if self.ranges.size == 0:
            raise ValueError("scan has no beams")

    def angles(self) -> np.ndarray:
        return self.angle_min + self.angle_increment * np.arange(self.ranges.size)


def used_beams(scan: LaserScan, stride: int, max_usable_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Subsampled, validity-filtered beams -> (angles, ranges)."""
    angles = scan.angles()[::stride]
    ranges = scan.ranges[::stride]
    limit = min(max_usable_range, scan.range_max)
    ok = np.isfinite(ranges) & (ranges > 0.0) & (ranges < limit)
    return angles[ok], ranges[ok]


def beam_log_likelihood(error: float | np.ndarray, sigma: float):
    """Log of the per-beam Gaussian factor exp(-error^2 / 2 sigma^2) / (sigma sqrt(2 pi))."""
    e = np.asarray(error, dtype=float)
    return -0.5 * (e / sigma) ** 2 - math.log(sigma) - LOG_SQRT_TWO_PI


def beam_likelihood(error: float, sigma: float) -> float:
    """Per-beam Gaussian weight factor (unnormalized across beams)."""
    return math.exp(-0.5 * (error / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class Particle:
    """One pose hypothesis: pose, probability weight, and hit count."""

    pose: Transform2D
    weight: float
    hits: int


class ParticleSet:
    """A population of weighted pose particles with its phase state.

    Poses, weights, and hit counts live in parallel numpy arrays; the
    particle count always stays within [particles_min, particles_max].
    """

    def __init__(self, poses: np.ndarray, weights: np.ndarray, hits: np.ndarray,
                 bounds: tuple[int, int]):
        self.poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.hits = np.asarray(hits, dtype=np.int64).reshape(-1)
        self.bounds = (int(bounds[0]), int(bounds[1]))
        self.last_prediction_time: float | None = None
        self.last_beams_used: int | None = None
        if self.bounds[0] < 1 or self.bounds[0] > self.bounds[1]:
            raise ValueError(f"bad particle bounds {self.bounds}")
        if not self.bounds[0] <= len(self.poses) <= self.bounds[1]:
            raise ValueError(
                f"particle count {len(self.poses)} outside bounds {self.bounds}"
            )

    def __len__(self) -> int:
        return self.poses.shape[0]

    def particles(self) -> list[Particle]:
        return [
            Particle(Transform2D(*self.poses[i]), float(self.weights[i]), int(self.hits[i]))
            for i in range(len(self))
        ]

    @classmethod
    def init_gaussian(cls, pose: Transform2D, std: tuple[float, float, float], n: int,
                      rng: np.random.Generator, bounds: tuple[int, int]) -> "ParticleSet":
        """n particles sampled around pose with per-axis std, equal weights."""
        if not bounds[0] <= n <= bounds[1]:
            raise ValueError(f"requested {n} particles outside bounds {bounds}")
        poses = np.empty((n, 3))
        poses[:, 0] = pose.x + rng.normal(0.0, 1.0, n) * std[0]
        poses[:, 1] = pose.y + rng.normal(0.0, 1.0, n) * std[1]
        yaw = pose.yaw + rng.normal(0.0, 1.0, n) * std[2]
        poses[:, 2] = wrap_angles(yaw)
        return cls(poses, np.full(n, 1.0 / n), np.zeros(n, dtype=np.int64), bounds)

    def predict(self, u: Transform2D, noise: MotionNoiseParams, rng: np.random.Generator) -> None:
        """Compose every pose with u perturbed by displacement-scaled noise.

        Weights and hit counts are untouched.
        """
        n = len(self)
        d_trans = u.translation_norm()
        d_yaw = abs(u.yaw)
        trans_std = noise.trans_per_meter * d_trans
        yaw_std = noise.yaw_per_rad * d_yaw + noise.yaw_per_meter * d_trans
        ux = u.x + rng.normal(0.0, 1.0, n) * trans_std
        uy = u.y + rng.normal(0.0, 1.0, n) * trans_std
        uyaw = u.yaw + rng.normal(0.0, 1.0, n) * yaw_std

        c = np.cos(self.poses[:, 2])
        s = np.sin(self.poses[:, 2])
        self.poses[:, 0] += c * ux - s * uy
        self.poses[:, 1] += s * ux + c * uy
        self.poses[:, 2] = wrap_angles(self.poses[:, 2] + uyaw)

    def correct(self, scan: LaserScan, grid: OccupancyGrid, base_to_laser: Transform2D,
                params: SensorModelParams) -> bool:
        """Reweight particles against the scan; returns True on degeneracy.

        Each used beam multiplies the weight by the Gaussian factor of its
        windowed map error (accumulated in log space), and the hit count
        becomes the number of beams within hit_threshold_factor * sigma.
        Poses are never modified. If every weight collapses, the set is
        reset to uniform and the degeneracy is reported to the caller.
        """
        angles, ranges = used_beams(scan, params.beam_stride, params.max_usable_range)
        self.last_beams_used = int(angles.size)
        if angles.size == 0:
            self.hits[:] = 0
            return False

        # Laser pose per particle: particle pose composed with the mount.
        c = np.cos(self.poses[:, 2])
        s = np.sin(self.poses[:, 2])
        laser = np.empty_like(self.poses)
        laser[:, 0] = self.poses[:, 0] + c * base_to_laser.x - s * base_to_laser.y
        laser[:, 1] = self.poses[:, 1] + s * base_to_laser.x + c * base_to_laser.y
        laser[:, 2] = self.poses[:, 2] + base_to_laser.yaw

        errors = beam_errors_batch(grid, laser, angles, ranges, params.sigma)
        self.hits = (errors <= params.hit_threshold_factor * params.sigma).sum(axis=1)

        if self.weights.sum() <= 0.0:
            self.weights = np.full(len(self), 1.0 / len(self))
            return True
        log_w = np.log(np.maximum(self.weights, 1e-300))
        log_w += beam_log_likelihood(errors, params.sigma).sum(axis=1)
        log_w -= log_w.max()
        w = np.exp(log_w)
        total = w.sum()
        if not np.isfinite(total) or total <= 0.0:
            self.weights = np.full(len(self), 1.0 / len(self))
            return True
        self.weights = w / total
        return False

    def quality(self, beams_used: int | None = None) -> float:
        """Mean fraction of hit beams across particles, in [0, 1]."""
        if self.last_beams_used is None:
            raise RuntimeError("quality requested before any correction has run")
        if beams_used is None:
            beams_used = self.last_beams_used
        if beams_used < 1:
            return 0.0
        return float(self.hits.mean() / beams_used)

    def reseed(self, winner_pct: float, loser_pct: float,
               jitter: tuple[float, float, float], rng: np.random.Generator) -> None:
        """Replace the lowest-weight fraction with perturbed winner copies.

        Winners are the top winner_pct by weight; each replacement copies the
        winner at sorted index floor(|N(0, n_winners/2)|) (clamped), then adds
        N(0, jitter) pose noise. Afterwards all weights become uniform. The
        particle count never changes and the best particle always survives.
        """
        if not (0.0 <= winner_pct <= 1.0 and 0.0 <= loser_pct <= 1.0):
            raise ValueError("winner_pct and loser_pct must lie in [0, 1]")
        if winner_pct + loser_pct > 1.0:
            raise ValueError("winner_pct + loser_pct must not exceed 1")
        n = len(self)
        if n < 2:
            return
        order = np.argsort(-self.weights, kind="stable")
        self.poses = self.poses[order]
        self.weights = self.weights[order]
        self.hits = self.hits[order]

        n_losers = int(n * loser_pct)
        if n_losers > 0:
            n_winners = max(1, int(n * winner_pct))
            draw = np.abs(rng.normal(0.0, n_winners / 2.0, n_losers))
            idx = np.minimum(draw.astype(np.int64), n_winners - 1)
            new_poses = self.poses[idx].copy()
            new_poses[:, 0] += rng.normal(0.0, 1.0, n_losers) * jitter[0]
            new_poses[:, 1] += rng.normal(0.0, 1.0, n_losers) * jitter[1]
            yaw = new_poses[:, 2] + rng.normal(0.0, 1.0, n_losers) * jitter[2]
            new_poses[:, 2] = wrap_angles(yaw)
            self.poses[n - n_losers :] = new_poses
            self.hits[n - n_losers :] = self.hits[idx]
        self.weights = np.full(n, 1.0 / n)

    def adapt_size(self, estimate: PoseEstimate, grow_above: float, shrink_below: float) -> None:
        """Grow the population 1.5x when uncertain, shrink 0.75x when sharp.

        Growth copies top-weight particles round-robin; shrinking drops the
        lowest weights. The count stays clamped to the configured bounds.
        """
        if not grow_above > shrink_below > 0:
            raise ValueError("need grow_above > shrink_below > 0")
        from .metrics import uncertainty

        u = uncertainty(estimate)
        n = len(self)
        if u > grow_above:
            target = min(self.bounds[1], int(n * 1.5))
        elif u < shrink_below:
            target = max(self.bounds[0], int(n * 0.75))
        else:
            return
        if target == n:
            return
        order = np.argsort(-self.weights, kind="stable")
        if target < n:
            keep = order[:target]
            self.poses = self.poses[keep].copy()
            self.weights = self.weights[keep].copy()
            self.hits = self.hits[keep].copy()
        else:
            extra = target - n
            pool = order[: max(1, n // 10)]
            src = pool[np.arange(extra) % pool.size]
            self.poses = np.concatenate([self.poses, self.poses[src]])
            self.weights = np.concatenate([self.weights, self.weights[src]])
            self.hits = np.concatenate([self.hits, self.hits[src]])
        self.weights /= self.weights.sum()

    def estimate(self) -> PoseEstimate:
        """Weighted mean pose and covariance of the population."""
        return weighted_mean_cov_arrays(self.poses, self.weights)

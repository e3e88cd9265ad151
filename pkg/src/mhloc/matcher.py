"""Cascade brute-force global map matching.

The coarsest pyramid level is scanned exhaustively (every free cell center
at 16 orientations, pi/8 apart); survivors are refined level by level, each
candidate expanding only into its child cells and neighboring orientations,
until ranked level-0 candidates come out. No randomness anywhere: ordering
is fully determined by score and (row, col, yaw index) tie-breaks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform2D, normalize_angle
from .gridmap import FREE, GridPyramid, OccupancyGrid, beam_errors_batch
from .particle_filter import LaserScan, SensorModelParams, used_beams

ANGLE_STEP = math.pi / 8.0
NUM_ANGLES = 16

_POSE_CHUNK = 2048  # keeps the (poses x beams x steps) work arrays small


@dataclass
class MatcherParams:
    levels: int = 4
    angle_step: float = ANGLE_STEP
    keep_per_level: int = 16
    min_score: float = 0.5  # advisory spawn floor; candidates are never filtered here

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.keep_per_level < 1:
            raise ValueError("keep_per_level must be >= 1")


@dataclass
class MatchCandidate:
    pose: Transform2D
    score: float
    level: int


@dataclass
class MatchStats:
    """Instrumentation: score evaluations per pyramid level."""

    evaluations: dict[int, int] = field(default_factory=dict)

    def add(self, level: int, count: int) -> None:
        self.evaluations[level] = self.evaluations.get(level, 0) + count


def score_pose(grid: OccupancyGrid, scan: LaserScan, pose: Transform2D,
               base_to_laser: Transform2D, sigma_eff: float,
               beam_stride: int = 1, max_usable_range: float = math.inf) -> float:
    """Fraction of used beams whose windowed map error is within 2 * sigma_eff."""
    angles, ranges = used_beams(scan, beam_stride, max_usable_range)
    if angles.size == 0:
        return 0.0
    laser = pose.compose(base_to_laser)
    errors = beam_errors_batch(
        grid, np.array([[laser.x, laser.y, laser.yaw]]), angles, ranges, sigma_eff
    )[0]
    return float((errors <= 2.0 * sigma_eff).mean())


def _score_batch(grid: OccupancyGrid, poses: np.ndarray, angles: np.ndarray,
                 ranges: np.ndarray, base_to_laser: Transform2D,
                 sigma_eff: float) -> np.ndarray:
    """score_pose over an (N, 3) pose array, chunked to bound memory."""
    if angles.size == 0:
        return np.zeros(poses.shape[0])
    c = np.cos(poses[:, 2])
    s = np.sin(poses[:, 2])
    laser = np.empty_like(poses)
    laser[:, 0] = poses[:, 0] + c * base_to_laser.x - s * base_to_laser.y
    laser[:, 1] = poses[:, 1] + s * base_to_laser.x + c * base_to_laser.y
    laser[:, 2] = poses[:, 2] + base_to_laser.yaw
    scores = np.empty(poses.shape[0])
    for start in range(0, poses.shape[0], _POSE_CHUNK):
        block = laser[start : start + _POSE_CHUNK]
        errors = beam_errors_batch(grid, block, angles, ranges, sigma_eff)
        scores[start : start + _POSE_CHUNK] = (errors <= 2.0 * sigma_eff).mean(axis=1)
    return scores


def _evaluate_cells(grid: OccupancyGrid, cells: np.ndarray, yaw_indices: np.ndarray,
                    angles: np.ndarray, ranges: np.ndarray,
                    base_to_laser: Transform2D, sigma_eff: float) -> np.ndarray:
    """Score (col, row, yaw_idx) triples at cell centers -> scores array."""
    poses = np.empty((cells.shape[0], 3))
    local = (cells + 0.5) * grid.resolution  # (col, row) -> local x, y
    c = math.cos(grid.origin.yaw)
    s = math.sin(grid.origin.yaw)
    poses[:, 0] = grid.origin.x + c * local[:, 0] - s * local[:, 1]
    poses[:, 1] = grid.origin.y + s * local[:, 0] + c * local[:, 1]
    poses[:, 2] = grid.origin.yaw + yaw_indices * ANGLE_STEP
    return _score_batch(grid, poses, angles, ranges, base_to_laser, sigma_eff)


def _rank_poses(cells: np.ndarray, yaw_indices: np.ndarray, scores: np.ndarray,
                keep: int) -> list[tuple[int, int, int, float]]:
    """Best `keep` (col, row, yaw_idx, score), ties broken by (row, col, yaw)."""
    entries = [
        (float(scores[i]), int(cells[i, 1]), int(cells[i, 0]), int(yaw_indices[i]))
        for i in range(len(scores))
    ]
    entries.sort(key=lambda e: (-e[0], e[1], e[2], e[3]))
    return [(e[2], e[1], e[3], e[0]) for e in entries[:keep]]


def _rank_cells(cells: np.ndarray, scores: np.ndarray, keep: int) -> list[tuple[int, int]]:
    """Best `keep` (col, row) by each cell's best score over its orientations."""
    best: dict[tuple[int, int], float] = {}
    for i in range(len(scores)):
        key = (int(cells[i, 0]), int(cells[i, 1]))
        score = float(scores[i])
        if score > best.get(key, -1.0):
            best[key] = score
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0][1], kv[0][0]))
    return [key for key, _ in ranked[:keep]]


def _all_orientations(cell_list: list[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(cell_list, dtype=np.int64)
    cells = np.repeat(arr, NUM_ANGLES, axis=0)
    yaw_indices = np.tile(np.arange(NUM_ANGLES), arr.shape[0])
    return cells, yaw_indices


def cascade_match(pyramid: GridPyramid, scan: LaserScan, base_to_laser: Transform2D,
                  params: MatcherParams, sensor: SensorModelParams,
                  stats: MatchStats | None = None) -> list[MatchCandidate]:
    """Ranked pose candidates for one scan, via coarse-to-fine exhaustive search.

    The coarsest level scans every free cell; each finer level rescans only
    the child cells of the surviving candidate cells, always over all 16
    orientations (level-0 work is therefore bounded by keep * 4 * 16 scores).
    Per level the scoring tolerance is sigma_eff = max(sensor.sigma, half a
    cell), wide enough that quantization cannot starve a coarse score but
    tight enough that scores still discriminate; level 0 scores at the true
    sensor accuracy. Returns up to keep_per_level candidates sorted
    by score descending (min_score filtering is the caller's job).
    """
    if len(pyramid) < params.levels:
        raise ValueError(f"pyramid has {len(pyramid)} levels, need {params.levels}")
    angles, ranges = used_beams(scan, sensor.beam_stride, sensor.max_usable_range)

    top = params.levels - 1
    grid = pyramid[top]
    rows, cols = np.nonzero(grid.cells == FREE)
    if rows.size == 0:
        return []
    cells, yaw_indices = _all_orientations(list(zip(cols.tolist(), rows.tolist())))
    sigma_eff = sensor.sigma if top == 0 else max(sensor.sigma, grid.resolution / 2.0)
    scores = _evaluate_cells(grid, cells, yaw_indices, angles, ranges, base_to_laser, sigma_eff)
    if stats is not None:
        stats.add(top, len(scores))

    for level in range(top - 1, -1, -1):
        surviving_cells = _rank_cells(cells, scores, params.keep_per_level)
        grid = pyramid[level]
        children = []
        for col, row in surviving_cells:
            for child_row in (2 * row, 2 * row + 1):
                if child_row >= grid.height:
                    continue
                for child_col in (2 * col, 2 * col + 1):
                    if child_col >= grid.width:
                        continue
                    if grid.cells[child_row, child_col] == FREE:
                        children.append((child_col, child_row))
        if not children:
            return []
        cells, yaw_indices = _all_orientations(children)
        sigma_eff = sensor.sigma if level == 0 else max(sensor.sigma, grid.resolution / 2.0)
        scores = _evaluate_cells(grid, cells, yaw_indices, angles, ranges, base_to_laser, sigma_eff)
        if stats is not None:
            stats.add(level, len(scores))

    grid = pyramid[0]
    out = []
    for col, row, yaw_idx, score in _rank_poses(cells, yaw_indices, scores,
                                                params.keep_per_level):
        x, y = grid.cell_to_world(col, row)
        yaw = normalize_angle(grid.origin.yaw + yaw_idx * ANGLE_STEP)
        out.append(MatchCandidate(Transform2D(x, y, yaw), score, 0))
    return out


def exhaustive_match(grid: OccupancyGrid, scan: LaserScan, base_to_laser: Transform2D,
                     sensor: SensorModelParams, sigma_eff: float | None = None
                     ) -> list[MatchCandidate]:
    """Brute-force reference search: every free cell at all 16 orientations.

    Returns all lattice poses ranked exactly like cascade_match; used as the
    oracle the cascade is checked against.
    """
    angles, ranges = used_beams(scan, sensor.beam_stride, sensor.max_usable_range)
    rows, cols = np.nonzero(grid.cells == FREE)
    if rows.size == 0:
        return []
    cells, yaw_indices = _all_orientations(list(zip(cols.tolist(), rows.tolist())))
    if sigma_eff is None:
        sigma_eff = sensor.sigma
    scores = _evaluate_cells(grid, cells, yaw_indices, angles, ranges, base_to_laser, sigma_eff)
    ranked = _rank_poses(cells, yaw_indices, scores, len(scores))
    out = []
    for col, row, yaw_idx, score in ranked:
        x, y = grid.cell_to_world(col, row)
        yaw = normalize_angle(grid.origin.yaw + yaw_idx * ANGLE_STEP)
        out.append(MatchCandidate(Transform2D(x, y, yaw), score, 0))
    return out

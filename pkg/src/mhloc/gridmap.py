"""Occupancy-grid storage, PGM + metadata file I/O, coordinate mapping,
multi-resolution coarsening, and the windowed beam-error query used by the
observation model.

Cell values are FREE < UNKNOWN < OCCUPIED so that max-aggregation implements
occupied-dominates coarsening directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Transform2D

FREE = 0
UNKNOWN = 1
OCCUPIED = 2


class MapFormatError(ValueError):
    """Raised for malformed map images or metadata files."""


@dataclass
class OccupancyGrid:
    """2D occupancy raster. cells[row, col], row 0 adjacent to the origin corner.

    origin is the pose of the corner of cell (0, 0) in the map frame;
    resolution is meters per cell.
    """

    width: int
    height: int
    resolution: float
    origin: Transform2D
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        self.cells = np.asarray(self.cells, dtype=np.uint8).reshape(self.height, self.width)

    def world_to_cell(self, x: float, y: float):
        """Cell (col, row) containing world point (x, y), or None when outside."""
        inv = self.origin.invert()
        lx, ly = inv.apply(x, y)
        col = math.floor(lx / self.resolution)
        row = math.floor(ly / self.resolution)
        if 0 <= col < self.width and 0 <= row < self.height:
            return col, row
        return None

    def cell_to_world(self, col: int, row: int) -> tuple[float, float]:
        """World coordinates of the center of cell (col, row)."""
        return self.origin.apply((col + 0.5) * self.resolution, (row + 0.5) * self.resolution)

    def is_occupied(self, col: int, row: int) -> bool:
        return self.cells[row, col] == OCCUPIED

    def is_free(self, col: int, row: int) -> bool:
        return self.cells[row, col] == FREE

    def occupancy_at(self, x: float, y: float) -> int | None:
        cell = self.world_to_cell(x, y)
        if cell is None:
            return None
        return int(self.cells[cell[1], cell[0]])


def world_to_cell(grid: OccupancyGrid, p: tuple[float, float]):
    return grid.world_to_cell(p[0], p[1])


def cell_to_world(grid: OccupancyGrid, cell: tuple[int, int]) -> tuple[float, float]:
    return grid.cell_to_world(cell[0], cell[1])


def _parse_pgm(data: bytes) -> np.ndarray:
    """Parse a binary (P5) 8-bit PGM into an array of shape (rows, cols)."""

    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MapFormatError("truncated PGM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise MapFormatError(f"not a binary PGM (magic {magic!r})")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise MapFormatError("non-numeric PGM header field") from exc
    if maxval != 255:
        raise MapFormatError(f"only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos : pos + width * height]
    if len(pixels) != width * height:
        raise MapFormatError("PGM pixel data shorter than header promises")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)


def _parse_metadata(text: str) -> dict:
    meta = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise MapFormatError(f"metadata line without ':': {line!r}")
        key, value = line.split(":", 1)
        meta[key.strip()] = value.strip()
    return meta


def _parse_floats(value: str, n: int, key: str) -> list[float]:
    parts = value.replace("[", " ").replace("]", " ").replace(",", " ").split()
    if len(parts) != n:
        raise MapFormatError(f"metadata key {key!r} needs {n} floats, got {value!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise MapFormatError(f"metadata key {key!r} has non-numeric value {value!r}") from exc


def load_map(image_path, metadata_path) -> OccupancyGrid:
    """Load an occupancy grid from a binary PGM plus a key: value metadata file.

    Pixel mapping: v <= 255*occupied_thresh -> OCCUPIED,
    v >= 255*free_thresh -> FREE, anything between -> UNKNOWN.
    The image is flipped vertically so row 0 sits at the origin corner.
    """
    with open(image_path, "rb") as f:
        img = _parse_pgm(f.read())
    with open(metadata_path, "r", encoding="utf-8") as f:
        meta = _parse_metadata(f.read())

    for key in ("resolution", "origin", "occupied_thresh", "free_thresh"):
        if key not in meta:
            raise MapFormatError(f"metadata missing required key {key!r}")
    resolution = float(meta["resolution"])
    if resolution <= 0:
        raise MapFormatError("resolution must be > 0")
    ox, oy, oyaw = _parse_floats(meta["origin"], 3, "origin")
    occupied_thresh = float(meta["occupied_thresh"])
    free_thresh = float(meta["free_thresh"])
    if occupied_thresh >= free_thresh:
        raise MapFormatError(
            f"occupied_thresh {occupied_thresh} must be below free_thresh {free_thresh}"
        )

    img = np.flipud(img)
    cells = np.full(img.shape, UNKNOWN, dtype=np.uint8)
    cells[img <= 255.0 * occupied_thresh] = OCCUPIED
    cells[img >= 255.0 * free_thresh] = FREE
    return OccupancyGrid(
        width=img.shape[1],
        height=img.shape[0],
        resolution=resolution,
        origin=Transform2D(ox, oy, oyaw),
        cells=cells,
    )


def save_map(grid: OccupancyGrid, image_path, metadata_path,
             occupied_thresh: float = 0.35, free_thresh: float = 0.65) -> None:
    """Write a grid back to PGM + metadata (inverse of load_map)."""
    if occupied_thresh >= free_thresh:
        raise MapFormatError("occupied_thresh must be below free_thresh")
    unknown_px = int(round(255.0 * (occupied_thresh + free_thresh) / 2.0))
    img = np.full(grid.cells.shape, unknown_px, dtype=np.uint8)
    img[grid.cells == OCCUPIED] = 0
    img[grid.cells == FREE] = 255
    img = np.flipud(img)
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    with open(image_path, "wb") as f:
        f.write(header + img.tobytes())
    with open(metadata_path, "w", encoding="utf-8") as f:
        f.write(f"resolution: {grid.resolution}\n")
        f.write(f"origin: {grid.origin.x} {grid.origin.y} {grid.origin.yaw}\n")
        f.write(f"occupied_thresh: {occupied_thresh}\n")
        f.write(f"free_thresh: {free_thresh}\n")


def coarsen(grid: OccupancyGrid) -> OccupancyGrid:
    """Halve the grid, aggregating each coarse cell over its <= 4 children.

    Occupied dominates, then unknown, then free, so no wall ever disappears
    at a coarser level.
    """
    h2 = (grid.height + 1) // 2
    w2 = (grid.width + 1) // 2
    padded = np.zeros((h2 * 2, w2 * 2), dtype=np.uint8)  # pad with FREE (neutral under max)
    padded[: grid.height, : grid.width] = grid.cells
    out = np.maximum.reduce(
        [padded[0::2, 0::2], padded[0::2, 1::2], padded[1::2, 0::2], padded[1::2, 1::2]]
    )
    return OccupancyGrid(
        width=w2,
        height=h2,
        resolution=grid.resolution * 2.0,
        origin=grid.origin,
        cells=out,
    )


@dataclass
class GridPyramid:
    """Coarsened occupancy levels; level 0 is the original grid."""

    levels: list[OccupancyGrid]

    def __getitem__(self, k: int) -> OccupancyGrid:
        return self.levels[k]

    def __len__(self) -> int:
        return len(self.levels)


def build_pyramid(grid: OccupancyGrid, num_levels: int) -> GridPyramid:
    if num_levels < 1:
        raise ValueError("pyramid needs at least one level")
    levels = [grid]
    for _ in range(num_levels - 1):
        levels.append(coarsen(levels[-1]))
    return GridPyramid(levels)


def _window_steps(measured: float, sigma: float, half_step: float) -> tuple[float, int]:
    """Start distance and step count of the +-3 sigma search window."""
    lo = max(0.0, measured - 3.0 * sigma)
    hi = measured + 3.0 * sigma
    n = int(math.floor((hi - lo) / half_step + 1e-9)) + 1
    return lo, n


def beam_error(grid: OccupancyGrid, beam_origin: Transform2D, angle: float,
               measured: float, sigma: float) -> float:
    """Distance discrepancy between a measured range and map obstacles.

    Walks the beam (direction beam_origin.yaw + angle) at half-cell steps,
    only inside the [measured - 3s, measured + 3s] window (clamped at 0),
    and returns the smallest |measured - d| over occupied cells found.
    An empty window returns the 3-sigma cap. Unknown cells do not count
    as obstacles.
    """
    half_step = grid.resolution / 2.0
    lo, n = _window_steps(measured, sigma, half_step)
    direction = beam_origin.yaw + angle
    cos_d = math.cos(direction)
    sin_d = math.sin(direction)
    best = 3.0 * sigma
    for k in range(n):
        d = lo + k * half_step
        cell = grid.world_to_cell(beam_origin.x + d * cos_d, beam_origin.y + d * sin_d)
        if cell is not None and grid.cells[cell[1], cell[0]] == OCCUPIED:
            err = abs(measured - d)
            if err < best:
                best = err
    return best


def beam_errors_batch(grid: OccupancyGrid, laser_poses: np.ndarray,
                      angles: np.ndarray, measured: np.ndarray,
                      sigma: float) -> np.ndarray:
    """Vectorized beam_error for N laser poses x M beams -> (N, M) errors.

    Bitwise-identical to the scalar beam_error: same window, same half-cell
    step grid, same occupied-only rule.
    """
    laser_poses = np.asarray(laser_poses, dtype=float).reshape(-1, 3)
    angles = np.asarray(angles, dtype=float).reshape(-1)
    measured = np.asarray(measured, dtype=float).reshape(-1)
    n_poses = laser_poses.shape[0]
    n_beams = angles.shape[0]
    if n_beams == 0 or n_poses == 0:
        return np.full((n_poses, n_beams), 3.0 * sigma)

    half_step = grid.resolution / 2.0
    lo = np.maximum(0.0, measured - 3.0 * sigma)
    hi = measured + 3.0 * sigma
    counts = np.floor((hi - lo) / half_step + 1e-9).astype(int) + 1
    k_max = int(counts.max())
    k = np.arange(k_max, dtype=float)
    # d[j, k] = distance along beam j at step k; mask steps beyond each window
    d = lo[:, None] + k[None, :] * half_step
    valid = k[None, :] < counts[:, None]

    directions = laser_poses[:, 2][:, None] + angles[None, :]  # (N, M)
    cos_d = np.cos(directions)
    sin_d = np.sin(directions)
    # world points: (N, M, K)
    px = laser_poses[:, 0][:, None, None] + d[None, :, :] * cos_d[:, :, None]
    py = laser_poses[:, 1][:, None, None] + d[None, :, :] * sin_d[:, :, None]

    inv = grid.origin.invert()
    c = math.cos(inv.yaw)
    s = math.sin(inv.yaw)
    lx = inv.x + c * px - s * py
    ly = inv.y + s * px + c * py
    col = np.floor(lx / grid.resolution).astype(np.int64)
    row = np.floor(ly / grid.resolution).astype(np.int64)
    inside = (col >= 0) & (col < grid.width) & (row >= 0) & (row < grid.height)
    col_c = np.where(inside, col, 0)
    row_c = np.where(inside, row, 0)
    occupied = inside & (grid.cells[row_c, col_c] == OCCUPIED) & valid[None, :, :]

    err = np.abs(measured[None, :, None] - d[None, :, :])
    err = np.where(occupied, err, np.inf)
    best = err.min(axis=2)
    return np.where(np.isfinite(best), np.minimum(best, 3.0 * sigma), 3.0 * sigma)

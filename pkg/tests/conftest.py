"""Shared builders: synthetic occupancy grids, scenario scripts, and config
files used across the unit and acceptance tests.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from mhloc.geometry import Transform2D
from mhloc.gridmap import FREE, OCCUPIED, OccupancyGrid, save_map


def grid_from_array(cells, resolution=0.05, origin=Transform2D(0.0, 0.0, 0.0)):
    cells = np.asarray(cells, dtype=np.uint8)
    return OccupancyGrid(cells.shape[1], cells.shape[0], resolution, origin, cells)


def empty_grid(width, height, resolution=0.05, origin=Transform2D(0.0, 0.0, 0.0),
               value=FREE):
    return grid_from_array(np.full((height, width), value, np.uint8), resolution, origin)


def bordered_room(width, height, resolution=0.05, origin=Transform2D(0.0, 0.0, 0.0),
                  thickness=2):
    """Free room enclosed by occupied border walls."""
    cells = np.full((height, width), FREE, np.uint8)
    cells[:thickness, :] = OCCUPIED
    cells[-thickness:, :] = OCCUPIED
    cells[:, :thickness] = OCCUPIED
    cells[:, -thickness:] = OCCUPIED
    return grid_from_array(cells, resolution, origin)


def fill_block(grid, x0, y0, x1, y1, value=OCCUPIED):
    """Mark a world-coordinate rectangle [x0,x1) x [y0,y1) with a cell value."""
    res = grid.resolution
    c0 = max(0, int(math.floor(x0 / res)))
    c1 = min(grid.width, int(math.ceil(x1 / res)))
    r0 = max(0, int(math.floor(y0 / res)))
    r1 = min(grid.height, int(math.ceil(y1 / res)))
    grid.cells[r0:r1, c0:c1] = value
    return grid


def room_10m() -> OccupancyGrid:
    """The 10 x 10 m experiment room: bordered, with asymmetric structure."""
    grid = bordered_room(200, 200, resolution=0.05)
    fill_block(grid, 2.0, 6.0, 3.05, 7.05)    # block A
    fill_block(grid, 6.0, 2.0, 8.55, 2.80)    # slab B
    fill_block(grid, 5.0, 5.0, 5.15, 8.55)    # wall C
    fill_block(grid, 7.5, 7.5, 8.05, 8.05)    # block D
    return grid


def corridor_grid(length_m=3.0, width_m=1.0, resolution=0.05) -> OccupancyGrid:
    """East-west corridor with a wall capping the far (+x) end."""
    cols = int(round(length_m / resolution))
    rows = int(round(width_m / resolution))
    cells = np.full((rows + 4, cols + 2), FREE, np.uint8)
    cells[:2, :] = OCCUPIED
    cells[-2:, :] = OCCUPIED
    cells[:, -2:] = OCCUPIED
    return grid_from_array(cells, resolution, Transform2D(0.0, -0.1, 0.0))


def write_map(tmp_path, grid, name="map"):
    image = tmp_path / f"{name}.pgm"
    metadata = tmp_path / f"{name}.meta"
    save_map(grid, image, metadata)
    return image, metadata


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
    return path


def base_config_doc(image, metadata, **overrides):
    doc = {
        "map": {"image": str(image), "metadata": str(metadata)},
        "seed": 7,
        "laser": {
            "beam_count": 90,
            "angle_min": -math.pi,
            "angle_increment": 2.0 * math.pi / 90,
            "range_max": 12.0,
            "range_noise_std": 0.0,
            "mount": [0.0, 0.0, 0.0],
        },
        "sensor_model": {"sigma": 0.05, "beam_stride": 3, "max_usable_range": 12.0},
        "filter": {
            "particles_min": 80,
            "particles_max": 250,
            "init_std": [0.08, 0.08, 0.08],
            "motion_noise": {"trans_per_meter": 0.15, "yaw_per_rad": 0.2,
                             "yaw_per_meter": 0.05},
            "winner_pct": 0.1,
            "loser_pct": 0.3,
            "reseed_jitter": [0.03, 0.03, 0.02],
            "grow_above": 0.3,
            "shrink_below": 0.08,
        },
        "matcher": {"levels": 4, "keep_per_level": 16, "min_score": 0.5},
        "multihyp": {
            "max_hypotheses": 5,
            "destroy_below": 0.25,
            "spawn_above": 0.35,
            "merge_dist": 0.5,
            "merge_yaw": 0.35,
            "quality_alpha": 0.5,
            "rates": {"predict_hz": 100.0, "correct_hz": 10.0, "reseed_hz": 0.3,
                      "match_period_s": 5.0},
        },
    }
    for path, value in overrides.items():
        node = doc
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return doc


def square_loop_waypoints(cx, cy, half=0.6, leg_s=4.0, duration=32.0, t0=0.0):
    """Square loop around (cx, cy), one corner per leg_s seconds, ending
    exactly at t0 + duration (mid-leg if need be)."""
    corners = [(-half, -half), (half, -half), (half, half), (-half, half)]
    headings = [0.0, math.pi / 2, math.pi, -math.pi / 2]
    waypoints = []
    t = t0
    i = 0
    end = t0 + duration
    while t < end - 1e-9:
        dx, dy = corners[i % 4]
        waypoints.append({"t": t, "x": cx + dx, "y": cy + dy, "yaw": headings[i % 4]})
        t += leg_s
        i += 1
    # close at exactly `end`, interpolated along the current leg
    frac = 1.0 - (t - end) / leg_s
    ax, ay = corners[(i - 1) % 4]
    bx, by = corners[i % 4]
    waypoints.append({
        "t": end,
        "x": cx + ax + frac * (bx - ax),
        "y": cy + ay + frac * (by - ay),
        "yaw": headings[i % 4] if frac == 1.0 else headings[(i - 1) % 4],
    })
    return waypoints


def random_structured_map(rng, size=48, resolution=0.05, min_occupied=0.30,
                          clear=(16, 32)):
    """Random occupied rectangles over a bordered map, with a guaranteed
    clear square (aligned to the pyramid) for the scan pose.

    Returns a grid whose occupied fraction is at least min_occupied.
    """
    cells = np.full((size, size), FREE, np.uint8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = OCCUPIED
    lo, hi = clear
    target = int(math.ceil(min_occupied * size * size))
    for _ in range(600):
        if (cells == OCCUPIED).sum() >= target:
            break
        h = int(rng.integers(2, 9))
        w = int(rng.integers(2, 9))
        r = int(rng.integers(1, size - h - 1))
        c = int(rng.integers(1, size - w - 1))
        cells[r : r + h, c : c + w] = OCCUPIED
        cells[lo:hi, lo:hi] = FREE  # keep the scan region clear
    assert (cells == OCCUPIED).sum() >= target
    return grid_from_array(cells, resolution)


@pytest.fixture(scope="session")
def room_grid():
    return room_10m()

"""
Exploration Module
Count-based visitation map, FoV marking, least-visited super-cell goals and coverage metrics
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_MAP_SIDE = 120
DEFAULT_SUPER_CELL = 15
DEFAULT_FOV_RADIUS = 8
DEFAULT_FOV_HALF_ANGLE = 30.0
EVAL_GRID = 11
REVISIT_MIN_OCCUPANCY = 300

# Visitation map sizes per world side
MAP_PRESETS = {
    100: (120, 15),
    200: (240, 30),
}


@dataclass
class ExplorationConfig:
    map_side: int = DEFAULT_MAP_SIDE
    super_cell: int = DEFAULT_SUPER_CELL
    fov_radius: int = DEFAULT_FOV_RADIUS
    fov_half_angle: float = DEFAULT_FOV_HALF_ANGLE

    def __post_init__(self):
        if self.super_cell < 1:
            raise ValueError(f"super_cell must be >= 1, got {self.super_cell}")
        if self.map_side < self.super_cell or self.map_side % self.super_cell != 0:
            raise ValueError(
                f"map_side ({self.map_side}) must be a positive multiple of super_cell ({self.super_cell})"
            )
        if self.fov_radius < 0:
            raise ValueError(f"fov_radius must be >= 0, got {self.fov_radius}")
        if not 0 < self.fov_half_angle <= 180:
            raise ValueError(f"fov_half_angle must be in (0, 180], got {self.fov_half_angle}")

    @classmethod
    def for_world(cls, side: int, **overrides) -> 'ExplorationConfig':
        """Map side / super-cell preset for a 100 or 200 block world."""
        map_side, super_cell = MAP_PRESETS.get(side, (DEFAULT_MAP_SIDE, DEFAULT_SUPER_CELL))
        values = {'map_side': map_side, 'super_cell': super_cell}
        values.update(overrides)
        return cls(**values)


@dataclass
class GoalSelection:
    goal: Tuple[float, float]
    super_cell_index: Tuple[int, int]
    min_count: int


def _angle_offset(a, b):
    return (a - b + 180.0) % 360.0 - 180.0


def fov_offsets(radius: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(dx, dy, bearing in degrees) of every cell with 0 < distance <= radius."""
    span = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(span, span)
    dx, dy = dx.ravel(), dy.ravel()
    dist = np.hypot(dx, dy)
    keep = (dist > 0) & (dist <= radius)
    dx, dy = dx[keep], dy[keep]
    return dx, dy, np.degrees(np.arctan2(dy, dx))


def fov_cells(x: float, y: float, yaw: float, radius: int = DEFAULT_FOV_RADIUS,
              half_angle: float = DEFAULT_FOV_HALF_ANGLE) -> np.ndarray:
    """
    Integer cell offsets inside the view sector.

    Returns:
        np.ndarray: (n, 2) array of (dx, dy) offsets relative to the agent cell
    """
    dx, dy, bearing = fov_offsets(radius)
    inside = np.abs(_angle_offset(bearing, yaw)) <= half_angle
    return np.stack([dx[inside], dy[inside]], axis=1)


class VisitationMap:
    """
    Visitation counts over a grid of 1-block cells centered on the start location.

    Super-cells stay aligned to the original anchor: expansion always adds whole
    super-cell rows/columns, so a super-cell keeps its world-space center.
    """

    def __init__(self, config: Optional[ExplorationConfig] = None, origin: Tuple[float, float] = (0.0, 0.0)):
        self.config = config or ExplorationConfig()
        side = self.config.map_side
        self.counts = np.zeros((side, side), dtype=np.int64)
        self.origin = (float(origin[0]), float(origin[1]))
        self.row0 = side // 2
        self.col0 = side // 2
        self.expansions = 0
        self._offsets = fov_offsets(self.config.fov_radius)

    @property
    def super_cell(self) -> int:
        return self.config.super_cell

    @property
    def shape(self) -> Tuple[int, int]:
        return self.counts.shape

    def cell_index(self, x: float, y: float) -> Tuple[int, int]:
        """(row, col) of the cell containing a world point."""
        col = int(math.floor(x - self.origin[0] + 0.5)) + self.col0
        row = int(math.floor(y - self.origin[1] + 0.5)) + self.row0
        return row, col

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (self.origin[0] + col - self.col0, self.origin[1] + row - self.row0)

    def super_cell_center(self, srow: int, scol: int) -> Tuple[float, float]:
        g = self.super_cell
        half = (g - 1) / 2.0
        return (self.origin[0] + scol * g + half - self.col0,
                self.origin[1] + srow * g + half - self.row0)

    def count_at(self, x: float, y: float) -> int:
        row, col = self.cell_index(x, y)
        rows, cols = self.shape
        if 0 <= row < rows and 0 <= col < cols:
            return int(self.counts[row, col])
        return 0

    def contains(self, x: float, y: float, margin: int = 0) -> bool:
        row, col = self.cell_index(x, y)
        rows, cols = self.shape
        return margin <= row < rows - margin and margin <= col < cols - margin

    def super_cell_scores(self) -> np.ndarray:
        g = self.super_cell
        rows, cols = self.shape
        return self.counts.reshape(rows // g, g, cols // g, g).sum(axis=(1, 3))


def expand(vmap: VisitationMap, pose, margin: int = 0) -> VisitationMap:
    """
    Grow the map by whole super-cell rows/columns until pose (plus margin cells) is inside.

    Existing counts keep their world coordinates.
    """
    g = vmap.super_cell
    row, col = vmap.cell_index(pose[0], pose[1])
    grew = False
    while col - margin < 0:
        vmap.counts = np.pad(vmap.counts, ((0, 0), (g, 0)))
        vmap.col0 += g
        col += g
        grew = True
    while col + margin >= vmap.counts.shape[1]:
        vmap.counts = np.pad(vmap.counts, ((0, 0), (0, g)))
        grew = True
    while row - margin < 0:
        vmap.counts = np.pad(vmap.counts, ((g, 0), (0, 0)))
        vmap.row0 += g
        row += g
        grew = True
    while row + margin >= vmap.counts.shape[0]:
        vmap.counts = np.pad(vmap.counts, ((0, g), (0, 0)))
        grew = True
    if grew:
        vmap.expansions += 1
        logger.debug("Visitation map expanded to %s", vmap.counts.shape)
    return vmap


def mark(vmap: VisitationMap, pose) -> VisitationMap:
    """Count the agent cell and every cell of the view sector once."""
    x, y, yaw = pose[0], pose[1], pose[2]
    radius = vmap.config.fov_radius
    if not vmap.contains(x, y, margin=radius):
        expand(vmap, pose, margin=radius)
    row, col = vmap.cell_index(x, y)
    vmap.counts[row, col] += 1
    dx, dy, bearing = vmap._offsets
    inside = np.abs(_angle_offset(bearing, yaw)) <= vmap.config.fov_half_angle
    vmap.counts[row + dy[inside], col + dx[inside]] += 1
    return vmap


def select_goal(vmap: VisitationMap, current, exclude: Iterable[Tuple[float, float]] = ()) -> GoalSelection:
    """
    Least-visited super-cell center.

    Ties go to the super-cell nearest to current, then row-major order. Super-cells
    whose centers are listed in exclude (known unreachable) are skipped unless
    nothing else remains.

    Args:
        vmap (VisitationMap): The map
        current: Agent (x, y)
        exclude: Super-cell centers to skip

    Returns:
        GoalSelection
    """
    scores = vmap.super_cell_scores()
    excluded = set(exclude)
    srows, scols = scores.shape
    allowed = np.ones_like(scores, dtype=bool)
    if excluded:
        for sr in range(srows):
            for sc in range(scols):
                if vmap.super_cell_center(sr, sc) in excluded:
                    allowed[sr, sc] = False
        if not allowed.any():
            allowed[:] = True
    masked = np.where(allowed, scores, np.iinfo(np.int64).max)
    best = masked.min()
    tied = np.argwhere(masked == best)
    centers = [vmap.super_cell_center(int(r), int(c)) for r, c in tied]
    dists = [math.hypot(cx - current[0], cy - current[1]) for cx, cy in centers]
    pick = int(np.argmin(dists))
    srow, scol = int(tied[pick][0]), int(tied[pick][1])
    return GoalSelection(goal=centers[pick], super_cell_index=(srow, scol), min_count=int(best))


def random_goal(vmap: VisitationMap, rng: np.random.Generator,
                exclude: Iterable[Tuple[float, float]] = ()) -> GoalSelection:
    """Uniformly random super-cell center (baseline goal policy)."""
    scores = vmap.super_cell_scores()
    excluded = set(exclude)
    cells = [(r, c) for r in range(scores.shape[0]) for c in range(scores.shape[1])
             if vmap.super_cell_center(r, c) not in excluded]
    if not cells:
        cells = [(r, c) for r in range(scores.shape[0]) for c in range(scores.shape[1])]
    srow, scol = cells[int(rng.integers(len(cells)))]
    return GoalSelection(goal=vmap.super_cell_center(srow, scol), super_cell_index=(srow, scol),
                         min_count=int(scores[srow, scol]))


def coverage_and_revisits(trajectory: Sequence[Tuple[float, float]], side: float,
                          eval_grid: int = EVAL_GRID,
                          min_occupancy: int = REVISIT_MIN_OCCUPANCY) -> Tuple[float, float]:
    """
    Map coverage (%) and revisit count over an eval_grid x eval_grid partition of [0, side)^2.

    Revisit count is the mean, over cells occupied for more than min_occupancy
    ticks, of the number of separate visits minus one.

    Args:
        trajectory: Per-tick (x, y) positions
        side (float): World side length

    Returns:
        tuple: (coverage percent, revisit count)
    """
    if len(trajectory) == 0:
        raise ValueError("coverage_and_revisits needs a non-empty trajectory")
    points = np.asarray(trajectory, dtype=np.float64)
    size = side / eval_grid
    ix = np.clip((points[:, 0] // size).astype(np.int64), 0, eval_grid - 1)
    iy = np.clip((points[:, 1] // size).astype(np.int64), 0, eval_grid - 1)
    cells = iy * eval_grid + ix
    total = eval_grid * eval_grid

    coverage = 100.0 * np.unique(cells).shape[0] / total

    starts = np.ones(cells.shape[0], dtype=bool)
    starts[1:] = cells[1:] != cells[:-1]
    occupancy = np.bincount(cells, minlength=total)
    segments = np.bincount(cells[starts], minlength=total)
    qualifying = occupancy > min_occupancy
    revisits = float(np.mean(segments[qualifying] - 1)) if qualifying.any() else 0.0
    return coverage, revisits

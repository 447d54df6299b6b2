"""
Navigation Module
Terrain grid, A* planning, goal-reaching reward and a step-wise path follower
"""

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from embedding_core import TERRAIN_KINDS

logger = logging.getLogger(__name__)

SUCCESS_RADIUS = 3.0
GOAL_REWARD = 100.0
SQRT2 = math.sqrt(2.0)

TERRAIN_COSTS = {
    'flat': 1.0,
    'grass': 1.0,
    'sand': 1.0,
    'water': 4.0,
    'mountain': 3.0,
    'wall': math.inf,
}

# Characters accepted by TerrainGrid.from_rows
TERRAIN_CHARS = {
    '.': 'flat',
    'g': 'grass',
    's': 'sand',
    'w': 'water',
    'm': 'mountain',
    '#': 'wall',
}

# 8-connected moves in a fixed order: orthogonal first, then diagonal
MOVES = ((1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1))

Cell = Tuple[int, int]


def to_cell(point) -> Cell:
    """Nearest integer cell of a world point."""
    return (int(math.floor(point[0] + 0.5)), int(math.floor(point[1] + 0.5)))


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class TerrainGrid:
    """
    Per-cell terrain kinds with traversal costs, indexed [y, x].

    Wall cells cost infinity; everything else costs at least 1.
    """

    def __init__(self, codes: np.ndarray):
        codes = np.asarray(codes, dtype=np.int8)
        if codes.ndim != 2:
            raise ValueError(f"Terrain must be a 2-D grid, got shape {codes.shape}")
        if codes.min() < 0 or codes.max() >= len(TERRAIN_KINDS):
            raise ValueError("Terrain grid holds unknown terrain codes")
        self.codes = codes
        self._cost_table = np.array([TERRAIN_COSTS[k] for k in TERRAIN_KINDS], dtype=np.float64)
        self.costs = self._cost_table[codes]
        self.version = 0
        self._components = None

    @classmethod
    def filled(cls, width: int, height: int, kind: str = 'flat') -> 'TerrainGrid':
        return cls(np.full((height, width), TERRAIN_KINDS.index(kind), dtype=np.int8))

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> 'TerrainGrid':
        """Build from text rows; rows[0] is y = 0."""
        try:
            codes = [[TERRAIN_KINDS.index(TERRAIN_CHARS[ch]) for ch in row] for row in rows]
        except KeyError as exc:
            raise ValueError(f"Unknown terrain character {exc}") from None
        return cls(np.array(codes, dtype=np.int8))

    @property
    def width(self) -> int:
        return int(self.codes.shape[1])

    @property
    def height(self) -> int:
        return int(self.codes.shape[0])

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def kind_at(self, cell: Cell) -> str:
        return TERRAIN_KINDS[self.codes[cell[1], cell[0]]]

    def cost_at(self, cell: Cell) -> float:
        return float(self.costs[cell[1], cell[0]])

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and math.isfinite(self.costs[cell[1], cell[0]])

    def set_kind(self, cell: Cell, kind: str):
        self.codes[cell[1], cell[0]] = TERRAIN_KINDS.index(kind)
        self.costs[cell[1], cell[0]] = TERRAIN_COSTS[kind]
        self.version += 1
        self._components = None

    def paint(self, kind: str, xs: slice, ys: slice):
        """Set a rectangular block of cells to one terrain kind."""
        self.codes[ys, xs] = TERRAIN_KINDS.index(kind)
        self.costs[ys, xs] = TERRAIN_COSTS[kind]
        self.version += 1
        self._components = None

    def move_allowed(self, cell: Cell, step: Tuple[int, int]) -> bool:
        """Target passable, and diagonal steps may not cut a wall corner."""
        nxt = (cell[0] + step[0], cell[1] + step[1])
        if not self.passable(nxt):
            return False
        if step[0] != 0 and step[1] != 0:
            return self.passable((cell[0] + step[0], cell[1])) and self.passable((cell[0], cell[1] + step[1]))
        return True

    def step_cost(self, cell: Cell, step: Tuple[int, int]) -> float:
        entered = self.costs[cell[1] + step[1], cell[0] + step[0]]
        return float(entered * SQRT2) if step[0] and step[1] else float(entered)

    def components(self) -> np.ndarray:
        """Connected-component label per cell (-1 for walls); cached per terrain version."""
        if self._components is None:
            labels = np.full(self.codes.shape, -1, dtype=np.int64)
            passable = np.isfinite(self.costs)
            label = 0
            for y0, x0 in np.argwhere(passable):
                if labels[y0, x0] >= 0:
                    continue
                labels[y0, x0] = label
                queue = deque([(int(x0), int(y0))])
                while queue:
                    x, y = queue.popleft()
                    # Diagonal moves need both orthogonal cells open, so 4-connectivity suffices
                    for dx, dy in MOVES[:4]:
                        nx, ny = x + dx, y + dy
                        if 0 <= nx < self.width and 0 <= ny < self.height and passable[ny, nx] and labels[ny, nx] < 0:
                            labels[ny, nx] = label
                            queue.append((nx, ny))
                label += 1
            self._components = labels
        return self._components


@dataclass
class PathPlan:
    cells: List[Cell]
    cost: float

    @property
    def moves(self) -> int:
        return len(self.cells) - 1


def octile(a: Cell, b: Cell) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (max(dx, dy) - min(dx, dy)) + SQRT2 * min(dx, dy)


def plan(grid: TerrainGrid, start, goal) -> Optional[PathPlan]:
    """
    Minimum-cost 8-connected path with A*.

    Args:
        grid (TerrainGrid): Terrain
        start: Start (x, y); must be passable
        goal: Goal (x, y)

    Returns:
        PathPlan or None when the goal cannot be reached
    """
    start, goal = to_cell(start), to_cell(goal)
    if not grid.passable(start):
        raise ValueError(f"Start cell {start} is not traversable")
    if not grid.passable(goal):
        return None
    comps = grid.components()
    if comps[start[1], start[0]] != comps[goal[1], goal[0]]:
        return None

    best: Dict[Cell, float] = {start: 0.0}
    parent: Dict[Cell, Cell] = {}
    h0 = octile(start, goal)
    frontier = [(h0, h0, start)]
    closed = set()
    while frontier:
        f, h, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal:
            break
        closed.add(cell)
        g = best[cell]
        for step in MOVES:
            if not grid.move_allowed(cell, step):
                continue
            nxt = (cell[0] + step[0], cell[1] + step[1])
            cost = g + grid.step_cost(cell, step)
            if cost < best.get(nxt, math.inf):
                best[nxt] = cost
                parent[nxt] = cell
                nh = octile(nxt, goal)
                heapq.heappush(frontier, (cost + nh, nh, nxt))
    else:
        return None

    cells = [goal]
    while cells[-1] != start:
        cells.append(parent[cells[-1]])
    cells.reverse()
    return PathPlan(cells=cells, cost=best[goal])


def path_cost(grid: TerrainGrid, cells: Sequence[Cell]) -> float:
    total = 0.0
    for a, b in zip(cells, cells[1:]):
        total += grid.step_cost(a, (b[0] - a[0], b[1] - a[1]))
    return total


def nearest_reachable(grid: TerrainGrid, start, goal) -> Optional[Cell]:
    """Reachable cell closest to goal (Euclidean), ties by (x, y) order."""
    start = to_cell(start)
    if not grid.passable(start):
        return None
    comps = grid.components()
    ys, xs = np.nonzero(comps == comps[start[1], start[0]])
    dist = np.hypot(xs - goal[0], ys - goal[1])
    best = dist.min()
    tied = sorted((int(x), int(y)) for x, y in zip(xs[dist == best], ys[dist == best]))
    return tied[0]


def step_reward(prev, nxt, goal, radius: float = SUCCESS_RADIUS, entered: bool = False) -> float:
    """
    Distance progress toward goal, plus the goal bonus when the radius is first entered.

    entered marks a trajectory that has already been inside the radius; re-entries
    after leaving it earn no further bonus.
    """
    before, after = distance(prev, goal), distance(nxt, goal)
    reward = before - after
    if not entered and after <= radius < before:
        reward += GOAL_REWARD
    return reward


@dataclass
class NavOutcome:
    path: List[Cell]
    reached: bool
    steps: int
    cumulative_reward: float
    cost: float = 0.0
    optimal_cost: Optional[float] = None


class Navigator:
    """
    Step-wise path follower.

    Keeps the current plan and replans when the goal changes, the agent is off
    the path, or the next cell became impassable.
    """

    def __init__(self, grid: TerrainGrid, radius: float = SUCCESS_RADIUS):
        self.grid = grid
        self.radius = radius
        self.goal = None
        self.target = None
        self.unreachable = False
        self.replans = 0
        self._path: List[Cell] = []
        self._index = 0
        self._version = grid.version

    def set_goal(self, goal, position):
        """Plan toward goal, falling back to the nearest reachable cell."""
        self.goal = (float(goal[0]), float(goal[1]))
        self._replan(position)

    def _replan(self, position):
        self.replans += 1
        self._version = self.grid.version
        here = to_cell(position)
        route = plan(self.grid, here, self.goal)
        if route is None:
            fallback = nearest_reachable(self.grid, here, self.goal)
            route = plan(self.grid, here, fallback) if fallback is not None else None
        if route is None:
            self.unreachable = True
            self.target = None
            self._path, self._index = [], 0
            return
        self.unreachable = False
        self.target = route.cells[-1]
        self._path, self._index = route.cells, 0

    def at_target(self, position) -> bool:
        return self.target is not None and to_cell(position) == self.target

    def goal_reached(self, position) -> bool:
        return self.goal is not None and distance(position, self.goal) <= self.radius

    def next_move(self, position) -> Optional[Tuple[int, int]]:
        """Next (dx, dy) toward the goal, or None when there is nothing left to do."""
        if self.goal is None:
            return None
        here = to_cell(position)
        if self._version != self.grid.version:
            self._replan(position)
        if self._index >= len(self._path) or self._path[self._index] != here:
            if here in self._path:
                self._index = self._path.index(here)
            else:
                self._replan(position)
        if self.unreachable or self._index + 1 >= len(self._path):
            return None
        nxt = self._path[self._index + 1]
        step = (nxt[0] - here[0], nxt[1] - here[1])
        if not self.grid.move_allowed(here, step):
            self._replan(position)
            if self.unreachable or len(self._path) < 2:
                return None
            nxt = self._path[1]
            step = (nxt[0] - here[0], nxt[1] - here[1])
        self._index += 1
        return step


def navigate(grid: TerrainGrid, start, goal, max_steps: int, radius: float = SUCCESS_RADIUS) -> NavOutcome:
    """
    Follow the planned path from start toward goal for at most max_steps moves.

    Returns:
        NavOutcome: reached is True iff the final position is within radius of goal
    """
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")
    position = to_cell(start)
    route = plan(grid, position, goal)
    path = [position]
    total_reward = 0.0
    realized = 0.0
    entered = distance(position, goal) <= radius
    if route is not None:
        navigator = Navigator(grid, radius)
        navigator.set_goal(goal, position)
        for _ in range(max_steps):
            step = navigator.next_move(position)
            if step is None:
                break
            nxt = (position[0] + step[0], position[1] + step[1])
            realized += grid.step_cost(position, step)
            total_reward += step_reward(position, nxt, goal, radius, entered)
            entered = entered or distance(nxt, goal) <= radius
            position = nxt
            path.append(position)
    else:
        logger.debug("navigate: goal %s unreachable from %s", goal, start)
    return NavOutcome(
        path=path,
        reached=distance(position, goal) <= radius,
        steps=len(path) - 1,
        cumulative_reward=total_reward,
        cost=realized,
        optimal_cost=route.cost if route is not None else None,
    )


def spl(outcomes: Sequence[NavOutcome]) -> float:
    """Success weighted by path length over a batch of navigations."""
    if not outcomes:
        return 0.0
    total = 0.0
    for outcome in outcomes:
        if not outcome.reached or outcome.optimal_cost is None:
            continue
        longest = max(outcome.optimal_cost, outcome.cost)
        total += 1.0 if longest == 0.0 else outcome.optimal_cost / longest
    return total / len(outcomes)

"""
World Simulator Module
Deterministic 2D gridworld: terrain, resources, scripted events, inventory success checks,
scenario layouts, task streams and scripted exploration tours
"""

import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from embedding_core import (
    DEFAULT_DIMENSION, DEFAULT_NOISE_ANGLE, DEFAULT_WINDOW, TASK_SOURCES, TERRAIN_KINDS,
    EncoderOracle, SceneDescriptor, encode_task, stable_seed,
)
from episodic_memory import MemoryConfig, VARIANTS, normalize_yaw
from exploration import DEFAULT_FOV_HALF_ANGLE, DEFAULT_FOV_RADIUS, ExplorationConfig, fov_cells
from navigation import SUCCESS_RADIUS, TerrainGrid, distance, plan, to_cell

logger = logging.getLogger(__name__)

SCENARIO_KINDS = (
    'aba_sparse', 'memory_task', 'long_instruction', 'long_navigation',
    'exploration_only', 'random_plains',
)
MEMORY_TASKS = ('water', 'death_spot', 'twin_houses')
STREAMS = ('aba', 'seq4', 'aba_random', 'long_instruction', 'long_navigation', 'memory_task', 'none')
POLICIES = ('count_based', 'random_goal', 'memoryless_walk')

ABA_A_TASKS = ('water', 'beef', 'wool', 'milk')
ABA_B_TASKS = ('log', 'dirt', 'leaves', 'seeds', 'sand')
ABA_RANDOM_A_TASKS = ('water', 'beef', 'wool')
SEQ4_TASKS = ('log', 'water', 'wool', 'beef')
LONG_INSTRUCTION_TASKS = ('water', 'beef', 'wool', 'log', 'dirt', 'seeds')
LANDMARKS = ('zombies', 'water', 'sugarcane', 'spider', 'tree', 'house')

DEFAULT_STREAMS = {
    'aba_sparse': 'aba',
    'memory_task': 'memory_task',
    'long_instruction': 'long_instruction',
    'long_navigation': 'long_navigation',
    'exploration_only': 'none',
    'random_plains': 'aba_random',
}
DEFAULT_BUDGETS = {
    'aba': 12_000,
    'seq4': 16_000,
    'aba_random': 12_000,
    'long_instruction': 500_000,
    'long_navigation': 500_000,
    'memory_task': 3_000,
    'none': 6_000,
}
LONG_TASK_CAP = 20_000
MEMORY_PHASE_TICKS = 3_000
LONG_NAV_PHASE_TICKS = 16_000
LANDMARK_STAY = 2_000
GOAL_WINDOW = 100
DEFAULT_MOVE_TICKS = 1

# Items whose harvest removes the source entity
CONSUMED_ITEMS = {'beef', 'wool'}
ENTITY_SOURCES = {'tree', 'cow', 'sheep'}


@dataclass
class AgentConfig:
    mode_timeout: int = 600
    interact_radius: float = 3.0
    interact_steps: int = 20

    def __post_init__(self):
        if self.mode_timeout < 1:
            raise ValueError(f"mode_timeout must be >= 1, got {self.mode_timeout}")
        if self.interact_radius <= 0:
            raise ValueError(f"interact_radius must be > 0, got {self.interact_radius}")
        if self.interact_steps < 1:
            raise ValueError(f"interact_steps must be >= 1, got {self.interact_steps}")


@dataclass
class OracleSettings:
    seed: int = 0
    dimension: int = DEFAULT_DIMENSION
    noise_angle: float = DEFAULT_NOISE_ANGLE
    window: int = DEFAULT_WINDOW

    def build(self) -> EncoderOracle:
        return EncoderOracle(seed=self.seed, dimension=self.dimension,
                             noise_angle=self.noise_angle, window=self.window)


@dataclass
class ScenarioSpec:
    """
    Everything needed to build one episode.

    Unset fields default per scenario kind: 200-block maps
    for the long-horizon scenarios, 100 otherwise; budgets per task stream.
    """
    scenario: str = 'aba_sparse'
    map_side: Optional[int] = None
    seed: int = 0
    variant: str = 'place_event'
    policy: str = 'count_based'
    stream: Optional[str] = None
    task_a: str = 'water'
    task_b: str = 'log'
    memory_task: str = 'water'
    budget: Optional[int] = None
    task_cap: Optional[int] = None
    move_ticks: int = DEFAULT_MOVE_TICKS
    fov_radius: int = DEFAULT_FOV_RADIUS
    fov_half_angle: float = DEFAULT_FOV_HALF_ANGLE
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    explore: Optional[ExplorationConfig] = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)

    def __post_init__(self):
        if self.scenario not in SCENARIO_KINDS:
            raise ValueError(f"scenario must be one of {SCENARIO_KINDS}, got '{self.scenario}'")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{self.variant}'")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got '{self.policy}'")
        if self.map_side is None:
            self.map_side = 200 if self.scenario.startswith('long_') else 100
        if self.map_side < 40:
            raise ValueError(f"map_side must be >= 40, got {self.map_side}")
        if self.stream is None:
            self.stream = DEFAULT_STREAMS[self.scenario]
        if self.stream not in STREAMS:
            raise ValueError(f"stream must be one of {STREAMS}, got '{self.stream}'")
        if self.scenario == 'aba_sparse':
            if self.task_a not in ABA_A_TASKS:
                raise ValueError(f"task_a must be one of {ABA_A_TASKS}, got '{self.task_a}'")
            if self.task_b not in ABA_B_TASKS:
                raise ValueError(f"task_b must be one of {ABA_B_TASKS}, got '{self.task_b}'")
        if self.memory_task not in MEMORY_TASKS:
            raise ValueError(f"memory_task must be one of {MEMORY_TASKS}, got '{self.memory_task}'")
        if self.budget is None:
            self.budget = DEFAULT_BUDGETS[self.stream]
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.task_cap is None and self.stream in ('long_instruction', 'long_navigation'):
            self.task_cap = LONG_TASK_CAP
        if self.move_ticks < 1:
            raise ValueError(f"move_ticks must be >= 1, got {self.move_ticks}")
        if self.explore is None:
            self.explore = ExplorationConfig.for_world(self.map_side)

    @property
    def label(self) -> str:
        if self.scenario == 'aba_sparse':
            return f"aba_sparse[{self.task_a}-{self.task_b}]"
        if self.scenario == 'memory_task':
            return f"memory_task[{self.memory_task}]"
        if self.scenario == 'random_plains':
            return f"random_plains[{self.stream}]"
        return self.scenario


@dataclass(frozen=True)
class EventScript:
    """Visual state timeline of one entity; 'gone' hides it."""
    timeline: Tuple[Tuple[int, str], ...]

    def __post_init__(self):
        if not self.timeline:
            raise ValueError("EventScript timeline must not be empty")
        starts = [t for t, _ in self.timeline]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError(f"EventScript timeline must be strictly increasing, got {starts}")

    def state_at(self, t: int) -> str:
        state = 'gone'
        for start, visual in self.timeline:
            if start > t:
                break
            state = visual
        return state

    def changes_between(self, t0: int, t1: int) -> List[Tuple[int, str]]:
        """Transitions with t0 < start <= t1."""
        return [(start, visual) for start, visual in self.timeline if t0 < start <= t1]


@dataclass
class Entity:
    uid: int
    kind: str
    x: int
    y: int
    alive: bool = True
    script: Optional[EventScript] = None

    @property
    def cell(self) -> Tuple[int, int]:
        return (self.x, self.y)

    def visual_state(self, t: int) -> Optional[str]:
        if not self.alive:
            return None
        if self.script is not None:
            state = self.script.state_at(t)
            return None if state == 'gone' else state
        return self.kind


@dataclass
class TaskSpec:
    """
    One task: a resource to obtain, or an image goal to reach.

    The query embedding is what memory is searched with; the execute embedding
    is what the skill runs on (for image goals both are the goal frame).
    """
    task_id: str
    query_embedding: np.ndarray
    execute_embedding: np.ndarray
    time_limit: int
    item: Optional[str] = None
    goal_pose: Optional[Tuple[float, float, float, float]] = None
    label: str = ''

    def __post_init__(self):
        if (self.item is None) == (self.goal_pose is None):
            raise ValueError("TaskSpec needs exactly one of item or goal_pose")
        if self.item is not None and self.item not in TASK_SOURCES:
            raise ValueError(f"Unknown task item '{self.item}'")
        if self.time_limit < 1:
            raise ValueError(f"time_limit must be >= 1, got {self.time_limit}")

    @property
    def is_image_goal(self) -> bool:
        return self.goal_pose is not None

    @property
    def target_kind(self) -> str:
        return TASK_SOURCES[self.item] if self.item is not None else 'goal'


def resource_task(oracle: EncoderOracle, item: str, time_limit: int, label: str = '', index: int = 0) -> TaskSpec:
    return TaskSpec(
        task_id=f"{index}:{item}",
        query_embedding=encode_task(oracle, item, 'query'),
        execute_embedding=encode_task(oracle, item, 'execute'),
        time_limit=time_limit,
        item=item,
        label=label or item,
    )


def image_goal_task(frame, time_limit: int, label: str = '', index: int = 0) -> TaskSpec:
    """Image-goal navigation toward a previously seen frame."""
    return TaskSpec(
        task_id=f"{index}:goal@{frame.time}",
        query_embedding=frame.embedding,
        execute_embedding=frame.embedding,
        time_limit=time_limit,
        goal_pose=(frame.x, frame.y, frame.yaw, frame.pitch),
        label=label or 'goal',
    )


@dataclass(frozen=True)
class Observation:
    window: Tuple[SceneDescriptor, ...]
    pose: Tuple[float, float, float, float, float]
    time: int


@dataclass
class TourLeg:
    """One scripted phase: travel to target, face yaw, stay until the clock reaches stay_until."""
    label: str
    target: Tuple[int, int]
    face_yaw: Optional[float]
    stay_until: int
    arrival: int = 0
    goal_window: Optional[Tuple[int, int]] = None
    stay_for: int = 0


class WorldState:
    """Terrain, entities, agent pose/inventory and the clock for one episode."""

    def __init__(self, spec: ScenarioSpec, terrain: TerrainGrid, start: Tuple[int, int], yaw: float = 0.0):
        self.spec = spec
        self.terrain = terrain
        self.entities: List[Entity] = []
        self.x, self.y = start
        self.yaw = normalize_yaw(yaw)
        self.pitch = 0.0
        self.z = 0.0
        self.inventory: Counter = Counter()
        self.clock = 0
        self.rng_seed = spec.seed
        self.tour: List[TourLeg] = []
        self.harvests = 0
        self._by_cell: Dict[Tuple[int, int], List[Entity]] = {}
        self._fov_cache: Dict[float, np.ndarray] = {}
        self._interact_item = None
        self._interact_progress = 0
        self.window = deque(maxlen=spec.oracle.window)

    @property
    def side(self) -> int:
        return self.terrain.width

    @property
    def position(self) -> Tuple[int, int]:
        return (self.x, self.y)

    def add_entity(self, kind: str, cell, script: Optional[EventScript] = None) -> Entity:
        entity = Entity(uid=len(self.entities), kind=kind, x=int(cell[0]), y=int(cell[1]), script=script)
        self.entities.append(entity)
        self._by_cell.setdefault(entity.cell, []).append(entity)
        return entity

    def remove_entity(self, entity: Entity):
        entity.alive = False
        bucket = self._by_cell.get(entity.cell, [])
        if entity in bucket:
            bucket.remove(entity)

    def entities_at(self, cell) -> List[Entity]:
        return self._by_cell.get(cell, [])

    def alive_count(self, kind: str) -> int:
        return sum(1 for e in self.entities if e.kind == kind and e.alive)

    def view_offsets(self, yaw: float) -> np.ndarray:
        """Sector cells plus the agent's own cell, as (dx, dy) offsets."""
        key = round(yaw, 3)
        cached = self._fov_cache.get(key)
        if cached is None:
            sector = fov_cells(0, 0, yaw, self.spec.fov_radius, self.spec.fov_half_angle)
            cached = np.vstack([np.zeros((1, 2), dtype=sector.dtype), sector])
            if len(self._fov_cache) > 512:
                self._fov_cache.clear()
            self._fov_cache[key] = cached
        return cached

    def visible_cells(self) -> np.ndarray:
        cells = self.view_offsets(self.yaw) + np.array([self.x, self.y])
        inside = (cells[:, 0] >= 0) & (cells[:, 0] < self.terrain.width) & \
                 (cells[:, 1] >= 0) & (cells[:, 1] < self.terrain.height)
        return cells[inside]

    def observe(self) -> Observation:
        return Observation(window=tuple(self.window), pose=(float(self.x), float(self.y), self.yaw, self.pitch, self.z),
                           time=self.clock)

    def facing(self, cell) -> bool:
        """Cell lies in the half-plane in front of the agent (own cell included)."""
        rad = math.radians(self.yaw)
        return (cell[0] - self.x) * math.cos(rad) + (cell[1] - self.y) * math.sin(rad) >= -1e-9

    def source_cells(self, kind: str, radius: float) -> List[Tuple[int, int]]:
        """Cells within radius holding a live source of a visual kind, nearest first."""
        found = []
        r = int(math.ceil(radius))
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                cell = (self.x + dx, self.y + dy)
                if not self.terrain.in_bounds(cell) or math.hypot(dx, dy) > radius:
                    continue
                if kind in ENTITY_SOURCES:
                    if any(e.kind == kind and e.alive for e in self.entities_at(cell)):
                        found.append(cell)
                elif self.terrain.kind_at(cell) == kind:
                    found.append(cell)
        found.sort(key=lambda c: (math.hypot(c[0] - self.x, c[1] - self.y), c))
        return found

    def visible_sources(self, kind: str) -> List[Tuple[int, int]]:
        cells = []
        for cx, cy in self.visible_cells():
            cell = (int(cx), int(cy))
            if kind in ENTITY_SOURCES:
                if any(e.kind == kind and e.alive for e in self.entities_at(cell)):
                    cells.append(cell)
            elif self.terrain.kind_at(cell) == kind:
                cells.append(cell)
        cells.sort(key=lambda c: (math.hypot(c[0] - self.x, c[1] - self.y), c))
        return cells


def describe(world: WorldState) -> SceneDescriptor:
    """Scene descriptor of what the agent currently sees."""
    cells = world.visible_cells()
    codes = world.terrain.codes[cells[:, 1], cells[:, 0]]
    counts = np.bincount(codes, minlength=len(TERRAIN_KINDS))
    terrain = tuple(sorted((TERRAIN_KINDS[i], int(c)) for i, c in enumerate(counts) if c > 0))
    entities = set()
    for cx, cy in cells:
        for entity in world.entities_at((int(cx), int(cy))):
            visual = entity.visual_state(world.clock)
            if visual is not None:
                entities.add((visual, (entity.x - world.x, entity.y - world.y)))
    bucket = int(((world.yaw % 360.0) + 22.5) // 45.0) % 8
    return SceneDescriptor(visible_entities=frozenset(entities), terrain_summary=terrain, pose_bucket=bucket)


def move_duration(cost: float, move_ticks: int = DEFAULT_MOVE_TICKS) -> int:
    """Clock ticks for a move into a cell of the given terrain cost; straight and diagonal alike."""
    return max(1, int(round(move_ticks * cost)))


def world_step(world: WorldState, action) -> Tuple[Observation, List[str]]:
    """
    Apply one action and advance the clock.

    Actions: ("move", dx, dy), ("turn", yaw, pitch), ("interact", item), ("noop",).

    Returns:
        tuple: (Observation after the action, list of event strings)
    """
    events = []
    kind = action[0]
    before = world.clock
    if kind != 'interact':
        world._interact_item, world._interact_progress = None, 0

    if kind == 'move':
        dx, dy = int(action[1]), int(action[2])
        if (dx, dy) == (0, 0) or abs(dx) > 1 or abs(dy) > 1:
            raise ValueError(f"Invalid move {action}")
        world.yaw = normalize_yaw(math.degrees(math.atan2(dy, dx)))
        here = (world.x, world.y)
        if world.terrain.move_allowed(here, (dx, dy)):
            world.x, world.y = here[0] + dx, here[1] + dy
            cost = world.terrain.cost_at((world.x, world.y))
            world.clock += move_duration(cost, world.spec.move_ticks)
        else:
            world.clock += 1
            events.append('blocked')
    elif kind == 'turn':
        world.yaw = normalize_yaw(float(action[1]))
        world.pitch = float(action[2]) if len(action) > 2 else world.pitch
        world.clock += 1
    elif kind == 'interact':
        item = action[1] if len(action) > 1 else None
        _interact(world, item, events)
        world.clock += 1
    elif kind == 'noop':
        world.clock += 1
    else:
        raise ValueError(f"Unknown action kind '{kind}'")

    for entity in world.entities:
        if entity.script is not None:
            for start, visual in entity.script.changes_between(before, world.clock):
                events.append(f"script:{entity.kind}#{entity.uid}:{visual}@{start}")
    world.window.append(describe(world))
    return world.observe(), events


def _interact(world: WorldState, item: Optional[str], events: List[str]):
    if item is None or item not in TASK_SOURCES:
        world._interact_item, world._interact_progress = None, 0
        return
    source = TASK_SOURCES[item]
    radius = world.spec.agent.interact_radius
    targets = [c for c in world.source_cells(source, radius) if world.facing(c)]
    if not targets:
        world._interact_item, world._interact_progress = None, 0
        return
    if world._interact_item == item:
        world._interact_progress += 1
    else:
        world._interact_item, world._interact_progress = item, 1
    if world._interact_progress < world.spec.agent.interact_steps:
        return
    world._interact_item, world._interact_progress = None, 0
    world.inventory[item] += 1
    events.append(f"obtained:{item}")
    if item in CONSUMED_ITEMS:
        cell = targets[0]
        victim = min((e for e in world.entities_at(cell) if e.kind == source and e.alive), key=lambda e: e.uid)
        world.remove_entity(victim)
        world.harvests += 1
        events.append(f"consumed:{victim.kind}#{victim.uid}")


def check_success(world: WorldState, task: TaskSpec, inventory_before: Counter) -> bool:
    if task.is_image_goal:
        return distance(world.position, task.goal_pose) <= SUCCESS_RADIUS
    return world.inventory[task.item] > inventory_before.get(task.item, 0)


# -- map layouts ----------------------------------------------------------------------

def _base_terrain(side: int, kind: str) -> TerrainGrid:
    grid = TerrainGrid.filled(side, side, kind)
    grid.paint('wall', slice(0, side), slice(0, 1))
    grid.paint('wall', slice(0, side), slice(side - 1, side))
    grid.paint('wall', slice(0, 1), slice(0, side))
    grid.paint('wall', slice(side - 1, side), slice(0, side))
    return grid


def _scatter_patches(grid: TerrainGrid, rng, kind: str, count: int, size: int, xs: Tuple[int, int], ys: Tuple[int, int]):
    for _ in range(count):
        x0 = int(rng.integers(xs[0], max(xs[0] + 1, xs[1] - size)))
        y0 = int(rng.integers(ys[0], max(ys[0] + 1, ys[1] - size)))
        grid.paint(kind, slice(x0, x0 + size), slice(y0, y0 + size))


def _free_cell(world: WorldState, rng, xs, ys, avoid=()) -> Tuple[int, int]:
    for _ in range(1000):
        cell = (int(rng.integers(xs[0], xs[1])), int(rng.integers(ys[0], ys[1])))
        if world.terrain.kind_at(cell) in ('wall', 'water') or world.entities_at(cell):
            continue
        if any(distance(cell, a) < 3 for a in avoid):
            continue
        return cell
    raise ValueError(f"No free cell in x{xs} y{ys}")


def _herd(world: WorldState, rng, kind: str, center, count: int):
    placed = []
    for _ in range(count):
        for _ in range(100):
            cell = (center[0] + int(rng.integers(-2, 3)), center[1] + int(rng.integers(-2, 3)))
            if world.terrain.passable(cell) and world.terrain.kind_at(cell) != 'water' and not world.entities_at(cell):
                world.add_entity(kind, cell)
                placed.append(cell)
                break
    return placed


def _trees(world: WorldState, rng, count: int, xs, ys):
    for _ in range(count):
        world.add_entity('tree', _free_cell(world, rng, xs, ys))


def _aba_map_number(spec: ScenarioSpec) -> int:
    if spec.task_b == 'sand':
        return 3
    if spec.task_a == 'water':
        return 1
    return 2


def _build_aba(spec: ScenarioSpec, rng) -> WorldState:
    """
    Map 1: dirt ground with grass spread around, trees on the left, one pond in the
    upper-right corner, a mountain ridge east of center.
    Map 2: grass ground with dirt strips at the far left/right, trees on the left,
    a mountain ridge through the middle, one herd of cows and one of sheep on the right.
    Map 3: map 2 plus one pond at the top and sand patches.
    """
    n = spec.map_side
    number = _aba_map_number(spec)
    if number == 1:
        grid = _base_terrain(n, 'flat')
        _scatter_patches(grid, rng, 'grass', n // 4, 5, (1, n - 1), (1, n - 1))
        ridge = n // 2 + n // 10
        grid.paint('mountain', slice(ridge, ridge + 3), slice(n // 7, n - n // 4))
        pond = (n - n // 7, n - n // 7)
        grid.paint('water', slice(pond[0] - 3, pond[0] + 3), slice(pond[1] - 3, pond[1] + 3))
    else:
        grid = _base_terrain(n, 'grass')
        strip = max(4, n // 10)
        grid.paint('flat', slice(1, strip), slice(1, n - 1))
        grid.paint('flat', slice(n - strip, n - 1), slice(1, n - 1))
        grid.paint('mountain', slice(n // 2 - 2, n // 2 + 2), slice(1, n - 1))
        if number == 3:
            grid.paint('water', slice(n // 2 + 6, n // 2 + 12), slice(n - n // 8 - 5, n - n // 8))
            _scatter_patches(grid, rng, 'sand', 8, 4, (2, n - 2), (2, n - n // 4))
    world = WorldState(spec, grid, start=(n // 2, n // 2))
    _trees(world, rng, max(12, n // 4), (2, n // 3), (2, n - 2))
    if number != 1:
        cows = (int(rng.integers(n * 2 // 3, n - n // 7)), int(rng.integers(n // 8, n // 2)))
        sheep = (int(rng.integers(n * 2 // 3, n - n // 7)), int(rng.integers(n // 2 + n // 8, n - n // 7)))
        _herd(world, rng, 'cow', cows, 3)
        _herd(world, rng, 'sheep', sheep, 3)
    return world


def _build_random_plains(spec: ScenarioSpec, rng) -> WorldState:
    """Plains with grass and dirt patches, tree groves, and single pond / cow herd / sheep herd."""
    n = spec.map_side
    grid = _base_terrain(n, 'grass')
    _scatter_patches(grid, rng, 'flat', n // 5, 6, (1, n - 1), (1, n - 1))
    center = (n // 2, n // 2)
    spots = []
    for _ in range(3):
        for _ in range(1000):
            cell = (int(rng.integers(8, n - 8)), int(rng.integers(8, n - 8)))
            if distance(cell, center) >= n / 4 and all(distance(cell, s) >= n / 5 for s in spots):
                spots.append(cell)
                break
        else:
            spots.append((int(rng.integers(8, n - 8)), int(rng.integers(8, n - 8))))
    pond, cows, sheep = spots
    grid.paint('water', slice(pond[0] - 2, pond[0] + 3), slice(pond[1] - 2, pond[1] + 3))
    world = WorldState(spec, grid, start=center)
    _herd(world, rng, 'cow', cows, 3)
    _herd(world, rng, 'sheep', sheep, 3)
    for _ in range(4):
        grove = (int(rng.integers(6, n - 6)), int(rng.integers(6, n - 6)))
        _trees(world, rng, 6, (grove[0] - 4, grove[0] + 4), (grove[1] - 4, grove[1] + 4))
    return world


def _build_long_instruction(spec: ScenarioSpec, rng) -> WorldState:
    """Trees lower-left and middle-bottom, sheep upper-left, cows lower-right, pond upper-right."""
    n = spec.map_side
    grid = _base_terrain(n, 'grass')
    _scatter_patches(grid, rng, 'flat', n // 6, 8, (1, n - 1), (1, n - 1))
    grid.paint('water', slice(n - n // 6 - 4, n - n // 6 + 4), slice(n - n // 6 - 4, n - n // 6 + 4))
    world = WorldState(spec, grid, start=(n // 2, n // 2))
    _trees(world, rng, n // 8, (4, n // 3), (4, n // 3))
    _trees(world, rng, n // 10, (n // 2 - n // 10, n // 2 + n // 10), (4, n // 4))
    for _ in range(5):
        _herd(world, rng, 'sheep', (int(rng.integers(10, n // 3)), int(rng.integers(n - n // 3, n - 10))), 5)
        _herd(world, rng, 'cow', (int(rng.integers(n - n // 3, n - 10)), int(rng.integers(10, n // 3))), 5)
    return world


def _viewpoint(landmark: Tuple[int, int]) -> Tuple[int, int]:
    return (landmark[0] - 3, landmark[1])


def _far_cell(world: WorldState, rng, anchors, min_dist: float) -> Tuple[int, int]:
    n = world.side
    best, best_d = None, -1.0
    for _ in range(2000):
        cell = (int(rng.integers(6, n - 6)), int(rng.integers(6, n - 6)))
        if world.terrain.kind_at(cell) != 'grass' or world.entities_at(cell):
            continue
        d = min(distance(cell, a) for a in anchors)
        if d >= min_dist:
            return cell
        if d > best_d:
            best, best_d = cell, d
    return best


def _landmark(world: WorldState, label: str, spot, scripts: Dict[str, EventScript]):
    """Place a landmark's entities/terrain in front of its viewpoint (east of it)."""
    x, y = spot
    if label == 'water':
        world.terrain.paint('water', slice(x - 1, x + 4), slice(y - 2, y + 3))
    elif label == 'zombies':
        for cell in ((x, y - 1), (x, y + 1), (x + 1, y)):
            world.add_entity('zombie', cell, scripts.get('zombies'))
    elif label == 'sugarcane':
        for cell in ((x, y - 1), (x, y), (x, y + 1)):
            world.add_entity('sugarcane', cell, scripts.get('sugarcane'))
    elif label == 'spider':
        world.add_entity('spider', (x, y), scripts.get('spider'))
    elif label == 'tree':
        for cell in ((x, y - 1), (x + 1, y), (x, y + 1)):
            world.add_entity('tree', cell)
    elif label == 'house':
        world.add_entity('house', (x, y))
    elif label == 'house_sand':
        world.add_entity('house', (x, y))
        world.terrain.paint('sand', slice(x + 1, x + 4), slice(y - 1, y + 2))
    else:
        raise ValueError(f"Unknown landmark '{label}'")


def schedule_tour(world: WorldState, legs: List[TourLeg]) -> List[TourLeg]:
    """Fill in arrival clocks by replaying the planned travel of every leg."""
    position = world.position
    clock = world.clock
    for leg in legs:
        route = plan(world.terrain, position, leg.target)
        if route is None:
            raise ValueError(f"Tour target {leg.target} is unreachable from {position}")
        for b in route.cells[1:]:
            clock += move_duration(world.terrain.cost_at(b), world.spec.move_ticks)
        position = leg.target
        if leg.face_yaw is not None and route.cells[-1] != route.cells[0]:
            clock += 1
        leg.arrival = clock
        leg.stay_until = max(leg.stay_until, clock + leg.stay_for)
        if leg.goal_window is not None:
            leg.goal_window = (clock, clock + GOAL_WINDOW)
        clock = leg.stay_until
    return legs


def _build_memory_task(spec: ScenarioSpec, rng) -> WorldState:
    """
    Uniform grass plains with one landmark (pond, burning zombies, or two houses).
    The tour stays at the landmark, travels, then stays somewhere far away.
    """
    n = spec.map_side
    grid = _base_terrain(n, 'grass')
    spot = (int(rng.integers(n // 5, n // 2)), int(rng.integers(n // 5, n - n // 5)))
    view = _viewpoint(spot)
    world = WorldState(spec, grid, start=view, yaw=0.0)
    legs = []
    if spec.memory_task == 'water':
        _landmark(world, 'water', spot, {})
        legs.append(TourLeg('water', view, 0.0, 500, goal_window=(0, GOAL_WINDOW)))
        anchors = [spot]
    elif spec.memory_task == 'death_spot':
        scripts = {'zombies': EventScript(((0, 'zombie_burning'), (500, 'gone')))}
        _landmark(world, 'zombies', spot, scripts)
        legs.append(TourLeg('zombies', view, 0.0, 2000, goal_window=(0, GOAL_WINDOW)))
        anchors = [spot]
    else:
        _landmark(world, 'house_sand', spot, {})
        other = _far_cell(world, rng, [spot], n / 3)
        other = (max(other[0], 8), other[1])
        _landmark(world, 'house', other, {})
        legs.append(TourLeg('house_1', view, 0.0, 100, goal_window=(0, GOAL_WINDOW)))
        legs.append(TourLeg('house_2', _viewpoint(other), 0.0, 2000))
        anchors = [spot, other]
    far = _far_cell(world, rng, anchors, n / 3)
    legs.append(TourLeg('far', far, None, MEMORY_PHASE_TICKS))
    world.tour = schedule_tour(world, legs)
    return world


def _build_long_navigation(spec: ScenarioSpec, rng) -> WorldState:
    """Six landmarks on a ring; dynamic ones are scripted relative to the agent's arrival."""
    n = spec.map_side
    grid = _base_terrain(n, 'grass')
    _scatter_patches(grid, rng, 'flat', n // 8, 6, (1, n - 1), (1, n - 1))
    center = np.array([n / 2.0, n / 2.0])
    radius = n * 0.3
    phase = float(rng.uniform(0, 2 * math.pi))
    spots = []
    for i in range(len(LANDMARKS)):
        angle = phase + 2 * math.pi * i / len(LANDMARKS)
        x, y = center + radius * np.array([math.cos(angle), math.sin(angle)])
        spots.append((int(round(x)), int(round(y))))
    # Clear the landmark surroundings before scheduling so travel costs are final
    for x, y in spots:
        grid.paint('grass', slice(x - 5, x + 6), slice(y - 5, y + 6))
    world = WorldState(spec, grid, start=_viewpoint(spots[0]), yaw=0.0)
    # Water paints terrain, so it goes in before travel times are computed
    _landmark(world, 'water', spots[LANDMARKS.index('water')], {})
    legs = [TourLeg(label, _viewpoint(spot), 0.0, 0, goal_window=(0, GOAL_WINDOW), stay_for=LANDMARK_STAY)
            for label, spot in zip(LANDMARKS, spots)]
    legs[-1].stay_until = LONG_NAV_PHASE_TICKS
    schedule_tour(world, legs)
    arrivals = {leg.label: leg.arrival for leg in legs}
    scripts = {
        'zombies': EventScript(((0, 'zombie_burning'), (arrivals['zombies'] + 500, 'gone'))),
        'sugarcane': EventScript(((0, 'sugarcane'), (arrivals['sugarcane'] + 1000, 'sugarcane_burst'))),
        'spider': EventScript(((0, 'gone'), (arrivals['spider'] + 1000, 'spider'))),
    }
    for label, spot in zip(LANDMARKS, spots):
        if label != 'water':
            _landmark(world, label, spot, scripts)
    world.tour = legs
    return world


def _build_exploration(spec: ScenarioSpec, rng) -> WorldState:
    """The barrier map used for exploration: map 1 layout without task semantics."""
    return _build_aba(spec, rng)


BUILDERS = {
    'aba_sparse': _build_aba,
    'exploration_only': _build_exploration,
    'random_plains': _build_random_plains,
    'long_instruction': _build_long_instruction,
    'long_navigation': _build_long_navigation,
    'memory_task': _build_memory_task,
}


def build_world(spec: ScenarioSpec) -> WorldState:
    """Build the deterministic world of a scenario; the same spec always gives the same world."""
    rng = np.random.default_rng(stable_seed('world', spec.scenario, spec.seed, spec.map_side, spec.label))
    world = BUILDERS[spec.scenario](spec, rng)
    if not world.terrain.passable(world.position):
        raise ValueError(f"Agent start {world.position} is not traversable")
    world.window.append(describe(world))
    logger.debug("Built %s world (side=%d, entities=%d)", spec.label, spec.map_side, len(world.entities))
    return world


# -- task streams ---------------------------------------------------------------------

def task_stream(spec: ScenarioSpec, oracle: EncoderOracle, goal_frames: Optional[Dict[str, list]] = None) -> Iterator[TaskSpec]:
    """
    Ordered tasks for a scenario.

    Finite streams carry the shared budget as each task's time limit (the runner
    charges elapsed ticks against it); the long streams are endless and capped per task.

    Args:
        spec (ScenarioSpec): Scenario
        oracle (EncoderOracle): Encoder for task prompts
        goal_frames: label -> candidate goal frames, for image-goal streams
    """
    rng = np.random.default_rng(stable_seed('tasks', spec.seed, spec.label))
    budget = spec.budget
    if spec.stream == 'aba':
        yield resource_task(oracle, spec.task_a, budget, 'A', 0)
        yield resource_task(oracle, spec.task_b, budget, 'B', 1)
        yield resource_task(oracle, spec.task_a, budget, "A'", 2)
    elif spec.stream == 'aba_random':
        a = spec.task_a if spec.task_a in ABA_RANDOM_A_TASKS else ABA_RANDOM_A_TASKS[int(rng.integers(3))]
        yield resource_task(oracle, a, budget, 'A', 0)
        yield resource_task(oracle, 'log', budget, 'B', 1)
        yield resource_task(oracle, a, budget, "A'", 2)
    elif spec.stream == 'seq4':
        for i, item in enumerate(SEQ4_TASKS):
            yield resource_task(oracle, item, budget, item, i)
    elif spec.stream == 'long_instruction':
        i = 0
        while True:
            item = LONG_INSTRUCTION_TASKS[int(rng.integers(len(LONG_INSTRUCTION_TASKS)))]
            yield resource_task(oracle, item, spec.task_cap, item, i)
            i += 1
    elif spec.stream == 'long_navigation':
        if not goal_frames:
            raise ValueError("long_navigation stream needs goal frames from the exploration phase")
        labels = sorted(goal_frames)
        i = 0
        while True:
            label = labels[int(rng.integers(len(labels)))]
            frames = goal_frames[label]
            yield image_goal_task(frames[int(rng.integers(len(frames)))], spec.task_cap, label, i)
            i += 1
    elif spec.stream == 'memory_task':
        if not goal_frames:
            raise ValueError("memory_task stream needs goal frames from the exploration phase")
        label = sorted(goal_frames)[0]
        frames = goal_frames[label]
        yield image_goal_task(frames[int(rng.integers(len(frames)))], MEMORY_PHASE_TICKS, label, 0)


def scripted_tour(world: WorldState) -> Iterator[tuple]:
    """
    Actions of the fixed exploration phase: for each leg, travel along the planned
    path, turn to the leg's yaw, then wait until the leg's stay ends.
    """
    for leg in world.tour:
        route = plan(world.terrain, world.position, leg.target)
        for a, b in zip(route.cells, route.cells[1:]):
            yield ('move', b[0] - a[0], b[1] - a[1])
        if leg.face_yaw is not None and route.cells[-1] != route.cells[0]:
            yield ('turn', leg.face_yaw, 0.0)
        while world.clock < leg.stay_until:
            yield ('noop',)


def goal_legs(world: WorldState) -> List[TourLeg]:
    return [leg for leg in world.tour if leg.goal_window is not None]

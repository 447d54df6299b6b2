"""
Agent Module
Memory-augmented control loop: mode selection, explore/execute modes, mode timeout and skill execution
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from embedding_core import EncoderOracle, encode_scene, stable_seed
from episodic_memory import Candidate, EpisodicMemory, ExperienceFrame, read
from exploration import VisitationMap, mark, random_goal, select_goal
from navigation import MOVES, SUCCESS_RADIUS, Navigator, distance
from world_sim import (
    AgentConfig, Observation, TaskSpec, WorldState, check_success, goal_legs, scripted_tour, world_step,
)

logger = logging.getLogger(__name__)

__all__ = [
    'Mode', 'AgentState', 'TaskResult', 'MemoryAgent', 'TaskSpec',
    'pick_one', 'select_mode',
]


class Mode(str, Enum):
    NONE = 'none'
    EXPLORE = 'explore'
    EXECUTE = 'execute'


@dataclass
class AgentState:
    """
    Mode bookkeeping for the current task.

    mode_elapsed counts clock ticks since the last mode transition.
    """
    mode: Mode = Mode.NONE
    mode_elapsed: int = 0
    goal: Optional[Tuple[float, float]] = None
    reached: bool = False
    target: Optional[ExperienceFrame] = None
    oriented: bool = False
    task: Optional[TaskSpec] = None
    mode_timeout: int = 600

    def reset_mode(self):
        self.mode = Mode.NONE
        self.mode_elapsed = 0
        self.goal = None
        self.reached = False
        self.target = None
        self.oriented = False

    def enter(self, mode: Mode, goal=None, target: Optional[ExperienceFrame] = None):
        self.mode = mode
        self.mode_elapsed = 0
        self.goal = goal
        self.reached = False
        self.target = target
        self.oriented = False


@dataclass
class TaskResult:
    task_id: str
    label: str
    success: bool
    duration: int
    start: int
    end: int
    queries: int = 0
    executes: int = 0


def pick_one(candidates: List[Candidate], position=None) -> Candidate:
    """Highest score, then most recent, then nearest to position."""
    if not candidates:
        raise ValueError("pick_one needs at least one candidate")

    def rank(c):
        near = distance(position, c.frame.position) if position is not None else 0.0
        return (-c.score, -c.frame.time, near)

    return min(candidates, key=rank)


def select_mode(memory: EpisodicMemory, task: TaskSpec, state: AgentState,
                position=None, failed: Sequence[Tuple[float, float]] = ()) -> Tuple[Mode, Optional[ExperienceFrame]]:
    """
    Query memory with the task prompt.

    Frames within the success radius of a failed target are skipped.

    Returns:
        tuple: (EXECUTE, target frame) when any remaining frame scores above the task
        threshold, otherwise (EXPLORE, None)
    """
    if state.mode is not Mode.NONE:
        raise ValueError(f"select_mode needs mode none, got {state.mode.value}")
    candidates = read(memory, task.query_embedding)
    if failed:
        candidates = [c for c in candidates
                      if all(distance(c.frame.position, spot) > SUCCESS_RADIUS for spot in failed)]
    if not candidates:
        return Mode.EXPLORE, None
    return Mode.EXECUTE, pick_one(candidates, position).frame


class MemoryAgent:
    """
    One agent for one episode.

    Owns the memory, the visitation map and the navigator; every observation it
    acts on is written to memory first.
    """

    def __init__(self, world: WorldState, memory: EpisodicMemory, oracle: EncoderOracle,
                 config: Optional[AgentConfig] = None, policy: Optional[str] = None,
                 recorder: Optional[Callable[[dict], None]] = None):
        self.world = world
        self.memory = memory
        self.oracle = oracle
        self.config = config or world.spec.agent
        self.policy = policy or world.spec.policy
        self.vmap = VisitationMap(world.spec.explore, origin=world.position)
        self.navigator = Navigator(world.terrain)
        self.state = AgentState(mode_timeout=self.config.mode_timeout)
        self.rng = np.random.default_rng(stable_seed('agent', world.spec.seed, world.spec.label))
        self.recorder = recorder
        self.excluded = set()
        self.failed_targets: List[Tuple[float, float]] = []
        self.writes = 0
        self.queries = 0
        self.skill_calls = 0
        self.clusters_scored = 0
        self.frames_scored = 0
        self.positions: List[Tuple[int, int]] = []
        self._walk_step: Optional[Tuple[int, int]] = None
        self._walk_left = 0
        self._walk_from = None

    @property
    def memoryless(self) -> bool:
        return self.memory.variant == 'none'

    # -- per-step pieces ---------------------------------------------------------------

    def observe(self, observation: Observation) -> ExperienceFrame:
        """Encode, write to memory and mark the visitation map."""
        x, y, yaw, pitch, z = observation.pose
        frame = ExperienceFrame(
            embedding=encode_scene(self.oracle, observation.window, nonce=observation.time),
            x=x, y=y, yaw=yaw, time=observation.time, pitch=pitch, z=z,
        )
        self.memory.write(frame)
        self.writes += 1
        mark(self.vmap, (x, y, yaw))
        return frame

    def begin_task(self, task: TaskSpec):
        self.state.task = task
        self.state.reset_mode()
        self.failed_targets = []

    def agent_step(self, observation: Observation) -> tuple:
        """
        Write the observation, apply the mode timeout, select a mode if needed and
        return the next action.
        """
        self.observe(observation)
        state = self.state
        if state.task is None:
            raise ValueError("agent_step called without a task")
        if state.mode_elapsed > state.mode_timeout:
            logger.debug("Mode %s timed out at t=%d", state.mode.value, observation.time)
            if state.mode is Mode.EXECUTE:
                self.failed_targets.append(state.goal)
            state.reset_mode()

        position = (observation.pose[0], observation.pose[1])
        if self.memoryless:
            if state.mode is Mode.NONE:
                state.enter(Mode.EXPLORE)
            return self.execute_skill(state.task)

        if state.mode is Mode.NONE:
            mode, target = select_mode(self.memory, state.task, state, position, self.failed_targets)
            self.queries += 1
            self.clusters_scored += self.memory.last_cost[0]
            self.frames_scored += self.memory.last_cost[1]
            if mode is Mode.EXECUTE:
                state.enter(Mode.EXECUTE, goal=target.position, target=target)
                self.navigator.set_goal(target.position, position)
            else:
                state.enter(Mode.EXPLORE)

        if state.mode is Mode.EXPLORE:
            return self.explore_action(position)
        return self._execute_mode_action(position)

    def explore_action(self, position) -> tuple:
        """Next move of the exploration policy."""
        if self.policy == 'memoryless_walk':
            return self.random_walk(position)
        state = self.state
        navigator = self.navigator
        if state.goal is not None and (navigator.goal_reached(position) or navigator.unreachable
                                       or navigator.at_target(position)):
            if not navigator.goal_reached(position):
                self.excluded.add(state.goal)
            state.goal = None
        if state.goal is None:
            if self.policy == 'random_goal':
                choice = random_goal(self.vmap, self.rng, self.excluded)
            else:
                choice = select_goal(self.vmap, position, self.excluded)
            state.goal = choice.goal
            navigator.set_goal(choice.goal, position)
        step = navigator.next_move(position)
        if step is None:
            if not navigator.goal_reached(position):
                self.excluded.add(state.goal)
            state.goal = None
            return self.random_walk(position)
        return ('move',) + step

    def _execute_mode_action(self, position) -> tuple:
        state = self.state
        if not state.reached and distance(position, state.goal) <= SUCCESS_RADIUS:
            state.reached = True
        if state.reached:
            if not state.oriented:
                state.oriented = True
                return ('turn', state.target.yaw, state.target.pitch)
            return self.execute_skill(state.task)
        step = self.navigator.next_move(position)
        if step is None:
            return ('noop',)
        return ('move',) + step

    def execute_skill(self, task: TaskSpec) -> tuple:
        """
        Scripted stand-in for the instruction-following policy.

        Interacts with a facing source within reach, turns toward a source within reach
        behind it, walks toward a visible source, or searches with a random walk.
        """
        if not (self.state.reached or self.memoryless):
            raise RuntimeError("execute_skill called before the memory target was reached")
        self.skill_calls += 1
        world = self.world
        position = world.position
        if task.is_image_goal:
            return self.random_walk(position) if self.memoryless else ('noop',)

        kind = task.target_kind
        near = world.source_cells(kind, self.config.interact_radius)
        facing = [c for c in near if world.facing(c)]
        if facing:
            return ('interact', task.item)
        if near:
            dx, dy = near[0][0] - world.x, near[0][1] - world.y
            return ('turn', math.degrees(math.atan2(dy, dx)), world.pitch)
        visible = world.visible_sources(kind)
        if visible:
            step = self._step_toward(visible[0])
            if step is not None:
                return ('move',) + step
        return self.random_walk(position)

    def _step_toward(self, cell) -> Optional[Tuple[int, int]]:
        here = self.world.position
        sx = int(np.sign(cell[0] - here[0]))
        sy = int(np.sign(cell[1] - here[1]))
        for step in ((sx, sy), (sx, 0), (0, sy)):
            if step != (0, 0) and self.world.terrain.move_allowed(here, step):
                return step
        return None

    def random_walk(self, position) -> tuple:
        """Persistent random walk: keep a heading for a while, pick a new one when blocked."""
        here = (int(position[0]), int(position[1]))
        blocked = self._walk_from is not None and self._walk_from == here
        if self._walk_step is None or self._walk_left <= 0 or blocked \
                or not self.world.terrain.move_allowed(here, self._walk_step):
            options = [m for m in MOVES if self.world.terrain.move_allowed(here, m)]
            if not options:
                self._walk_step = None
                return ('noop',)
            self._walk_step = options[int(self.rng.integers(len(options)))]
            self._walk_left = int(self.rng.integers(5, 21))
        self._walk_left -= 1
        self._walk_from = here
        return ('move',) + self._walk_step

    # -- drivers ------------------------------------------------------------------------

    def _apply(self, action, phase: str, task_id: Optional[str] = None) -> Tuple[Observation, List[str]]:
        world = self.world
        before_clock = world.clock
        before_items = Counter(world.inventory)
        observation, events = world_step(world, action)
        ticks = world.clock - before_clock
        self.state.mode_elapsed += ticks
        self.positions.extend([world.position] * ticks)
        if self.recorder is not None:
            gained = {k: v - before_items.get(k, 0) for k, v in world.inventory.items()
                      if v != before_items.get(k, 0)}
            self.recorder({
                't': world.clock,
                'phase': phase,
                'task': task_id,
                'pose': [world.x, world.y, round(world.yaw, 6), round(world.pitch, 6)],
                'mode': self.state.mode.value,
                'action': list(action),
                'gained': gained,
                'events': events,
                'frames': len(self.memory),
                'evictions': self.memory.evictions,
            })
        return observation, events

    def follow_tour(self) -> Dict[str, List[ExperienceFrame]]:
        """
        Drive the world's scripted tour, writing every observation.

        Returns:
            dict: leg label -> frames observed inside that leg's goal window
        """
        windows = {leg.label: leg.goal_window for leg in goal_legs(self.world)}
        goal_frames: Dict[str, List[ExperienceFrame]] = {label: [] for label in windows}
        observation = self.world.observe()
        for action in scripted_tour(self.world):
            frame = self.observe(observation)
            for label, (lo, hi) in windows.items():
                if lo <= frame.time < hi:
                    goal_frames[label].append(frame)
            observation, _ = self._apply(action, 'tour')
        logger.info("Tour finished at t=%d with %d frames stored", self.world.clock, len(self.memory))
        return {label: frames for label, frames in goal_frames.items() if frames}

    def run_task(self, task: TaskSpec, budget: Optional[int] = None) -> TaskResult:
        """Act until the task succeeds or its time limit (capped by budget) runs out."""
        world = self.world
        limit = task.time_limit if budget is None else min(task.time_limit, budget)
        self.begin_task(task)
        before = Counter(world.inventory)
        start = world.clock
        queries = self.queries
        skill_calls = self.skill_calls
        observation = world.observe()
        success = False
        while world.clock - start < limit:
            action = self.agent_step(observation)
            observation, _ = self._apply(action, 'task', task.task_id)
            if check_success(world, task, before):
                success = world.clock - start <= limit
                break
        end = world.clock
        result = TaskResult(
            task_id=task.task_id,
            label=task.label,
            success=success,
            duration=min(end - start, limit),
            start=start,
            end=end,
            queries=self.queries - queries,
            executes=self.skill_calls - skill_calls,
        )
        logger.debug("Task %s (%s): success=%s duration=%d", task.task_id, task.label, success, result.duration)
        return result

    def explore(self, budget: int) -> List[Tuple[int, int]]:
        """Pure exploration for budget ticks; returns the per-tick positions."""
        if budget < 1:
            raise ValueError(f"budget must be >= 1, got {budget}")
        start = self.world.clock
        self.state.reset_mode()
        self.state.enter(Mode.EXPLORE)
        self.positions = [self.world.position]
        observation = self.world.observe()
        while self.world.clock - start < budget:
            self.observe(observation)
            action = self.explore_action(self.world.position)
            observation, _ = self._apply(action, 'explore')
        return self.positions[:budget]

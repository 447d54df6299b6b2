"""
Scenario Runner
Run seeded episodes, build per-episode reports, write JSON-lines trajectory logs and verify replays
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from agent import MemoryAgent, TaskResult
from episodic_memory import create_memory
from exploration import coverage_and_revisits
from scenario_config import spec_from_document, spec_to_document, with_seed
from world_sim import ScenarioSpec, build_world, task_stream

logger = logging.getLogger(__name__)

REPORT_SCHEMA = 'placemem.report/1'
TRAJECTORY_SCHEMA = 'placemem.trajectory/1'


@dataclass
class ScenarioReport:
    """One episode's outcome; aggregates are recomputed from these records only."""
    scenario: str
    kind: str
    variant: str
    policy: str
    seed: int
    tasks: List[dict] = field(default_factory=list)
    success_rate: float = 0.0
    tasks_solved: int = 0
    steps: int = 0
    coverage: Optional[float] = None
    revisits: Optional[float] = None
    memory: Dict[str, int] = field(default_factory=dict)
    query: Dict[str, float] = field(default_factory=dict)
    retention: Dict[str, int] = field(default_factory=dict)
    search_buffer: bool = False
    schema: str = REPORT_SCHEMA

    def to_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_record(cls, record: dict) -> 'ScenarioReport':
        if record.get('schema') != REPORT_SCHEMA:
            raise ValueError(f"Unsupported report schema {record.get('schema')!r}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(record) - known)
        if unknown:
            raise ValueError(f"Unknown report keys: {', '.join(unknown)}")
        return cls(**record)


@dataclass
class ReplayVerdict:
    ok: bool
    lines_checked: int
    first_mismatch: Optional[int] = None
    message: str = ''


def _task_record(result: TaskResult) -> dict:
    return {
        'task_id': result.task_id,
        'label': result.label,
        'success': result.success,
        'duration': result.duration,
    }


def _retained(memory, frames) -> int:
    stored = {id(f) for f in memory.frames()}
    return sum(1 for f in frames if id(f) in stored)


def run_episode(spec: ScenarioSpec, recorder=None) -> ScenarioReport:
    """
    Run one seeded episode of a scenario.

    Args:
        spec (ScenarioSpec): Scenario with its episode seed
        recorder: Optional callable receiving one dict per world step

    Returns:
        ScenarioReport
    """
    return play_episode(spec, recorder)[0]


def play_episode(spec: ScenarioSpec, recorder=None):
    """Run one episode; returns (report, final memory)."""
    oracle = spec.oracle.build()
    memory = create_memory(spec.variant, spec.memory, oracle.dimension)
    world = build_world(spec)
    agent = MemoryAgent(world, memory, oracle, recorder=recorder)
    report = ScenarioReport(scenario=spec.label, kind=spec.scenario, variant=spec.variant,
                            policy=spec.policy, seed=spec.seed,
                            search_buffer=spec.memory.search_buffer)

    if spec.stream == 'none':
        positions = agent.explore(spec.budget)
        report.coverage, report.revisits = coverage_and_revisits(positions, world.side)
    else:
        goal_frames = agent.follow_tour() if world.tour else None
        if goal_frames:
            # Measured when the exploration phase ends, before any task is given
            report.retention = {label: _retained(memory, frames) for label, frames in sorted(goal_frames.items())}
        phase_start = world.clock
        results = []
        for task in task_stream(spec, oracle, goal_frames):
            remaining = spec.budget - (world.clock - phase_start)
            if remaining <= 0:
                break
            results.append(agent.run_task(task, remaining))
        if spec.stream in ('aba', 'aba_random', 'seq4'):
            # Tasks never reached inside the shared budget count as failures
            planned = list(task_stream(spec, oracle))
            for task in planned[len(results):]:
                results.append(TaskResult(task.task_id, task.label, False, 0, world.clock, world.clock))
        report.tasks = [_task_record(r) for r in results]
        report.tasks_solved = sum(1 for r in results if r.success)
        report.success_rate = report.tasks_solved / len(results) if results else 0.0
    report.steps = world.clock
    report.memory = {
        'frames': len(memory),
        'clusters': memory.cluster_count(),
        'evictions': memory.evictions,
        'writes': memory.writes,
    }
    report.query = {
        'queries': agent.queries,
        'clusters_scored': agent.clusters_scored,
        'frames_scored': agent.frames_scored,
    }
    logger.info("Episode %s seed=%d variant=%s: solved %d task(s)", spec.label, spec.seed, spec.variant,
                report.tasks_solved)
    return report, memory


class TrajectoryWriter:
    """Collects trajectory lines: a header, one line per world step, a footer."""

    def __init__(self, spec: ScenarioSpec):
        self.lines = [json.dumps({'kind': 'header', 'schema': TRAJECTORY_SCHEMA,
                                  'spec': spec_to_document(spec)}, sort_keys=True)]

    def __call__(self, record: dict):
        self.lines.append(json.dumps(dict(record, kind='step'), sort_keys=True))

    def finish(self, report: ScenarioReport):
        self.lines.append(json.dumps({'kind': 'end', 'report': asdict(report)}, sort_keys=True))

    def write(self, path):
        Path(path).write_text('\n'.join(self.lines) + '\n')


def record_episode(spec: ScenarioSpec):
    """Run an episode and return (report, trajectory lines)."""
    writer = TrajectoryWriter(spec)
    report = run_episode(spec, recorder=writer)
    writer.finish(report)
    return report, writer.lines


def replay(log_path) -> ReplayVerdict:
    """
    Re-run the episode described by a trajectory log and compare it line by line.

    Returns:
        ReplayVerdict: ok, or the index of the first line that differs
    """
    lines = Path(log_path).read_text().splitlines()
    if not lines:
        return ReplayVerdict(False, 0, 0, 'empty log')
    try:
        header = json.loads(lines[0])
        if header.get('kind') != 'header' or header.get('schema') != TRAJECTORY_SCHEMA:
            raise ValueError('not a trajectory header')
        spec = spec_from_document(header['spec'])
    except (ValueError, KeyError, TypeError) as exc:
        return ReplayVerdict(False, 1, 0, f"bad header: {exc}")

    _, expected = record_episode(spec)
    for i, (got, want) in enumerate(zip(lines, expected)):
        if got != want:
            return ReplayVerdict(False, i + 1, i, f"line {i} differs")
    if len(lines) != len(expected):
        index = min(len(lines), len(expected))
        return ReplayVerdict(False, index, index,
                             f"log has {len(lines)} lines, replay produced {len(expected)}")
    return ReplayVerdict(True, len(lines))


def _episode_job(args):
    doc, log_dir = args
    spec = spec_from_document(doc)
    if log_dir is None:
        return run_episode(spec).to_line()
    report, lines = record_episode(spec)
    name = f"{spec.label}_{spec.variant}_{spec.policy}_s{spec.seed}.jsonl".replace('[', '_').replace(']', '')
    Path(log_dir, name).write_text('\n'.join(lines) + '\n')
    return report.to_line()


def run_scenarios(specs: Iterable[ScenarioSpec], episodes: int, seed_base: int = 0, jobs: int = 1,
                  log_dir=None) -> List[str]:
    """
    Run every scenario for seeds seed_base .. seed_base + episodes - 1.

    Returns report lines in (scenario, seed) order regardless of jobs.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
    work = [(spec_to_document(with_seed(spec, seed_base + i)), log_dir)
            for spec in specs for i in range(episodes)]
    if jobs == 1:
        return [_episode_job(item) for item in work]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(_episode_job, work))


def load_reports(path) -> List[ScenarioReport]:
    reports = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            reports.append(ScenarioReport.from_record(json.loads(line)))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{i + 1}: {exc}") from exc
    return reports

import pytest

from conftest import frame
from embedding_core import EncoderOracle
from episodic_memory import Candidate, MemoryConfig, create_memory
from navigation import TerrainGrid
from world_sim import ScenarioSpec, WorldState, build_world, describe, resource_task
from agent import AgentState, MemoryAgent, Mode, pick_one, select_mode

ROOM = [
    "##########",
    "#........#",
    "#...w....#",
    "#........#",
    "#........#",
    "##########",
]


def make_agent(oracle, variant='fifo', start=(2, 2), yaw=0.0, rows=ROOM, seeded=(), recorder=None, **spec_fields):
    spec = ScenarioSpec(scenario='exploration_only', map_side=40, variant=variant, **spec_fields)
    world = WorldState(spec, TerrainGrid.from_rows(rows), start, yaw)
    world.window.append(describe(world))
    memory = create_memory(variant, MemoryConfig())
    for f in seeded:
        memory.write(f)
    return MemoryAgent(world, memory, oracle, recorder=recorder)


def test_empty_memory_selects_explore(oracle):
    memory = create_memory('place_event')
    mode, target = select_mode(memory, resource_task(oracle, 'water', 100), AgentState())
    assert mode is Mode.EXPLORE and target is None


def test_matching_frame_selects_execute(oracle):
    memory = create_memory('fifo')
    stored = frame(oracle.base('water'), 3, 10.0, 12.0)
    memory.write(frame(oracle.base('tree'), 1))
    memory.write(stored)
    mode, target = select_mode(memory, resource_task(oracle, 'water', 100), AgentState())
    assert mode is Mode.EXECUTE and target is stored


def test_select_mode_requires_mode_none(oracle):
    state = AgentState(mode=Mode.EXPLORE)
    with pytest.raises(ValueError):
        select_mode(create_memory('fifo'), resource_task(oracle, 'water', 100), state)


def test_pick_one_breaks_ties_by_recency_then_distance(oracle):
    vec = oracle.base('water')
    old = Candidate(frame(vec, 1, 0.0, 0.0), 80.0)
    new_far = Candidate(frame(vec, 5, 50.0, 0.0), 80.0)
    new_near = Candidate(frame(vec, 5, 2.0, 0.0), 80.0)
    better = Candidate(frame(vec, 0, 90.0, 0.0), 90.0)
    assert pick_one([old, new_far]) is new_far
    assert pick_one([old, new_far, new_near], position=(0.0, 0.0)) is new_near
    assert pick_one([old, new_far, better]) is better
    with pytest.raises(ValueError):
        pick_one([])


def test_every_step_writes_one_frame(oracle):
    records = []
    agent = make_agent(oracle, recorder=records.append)
    result = agent.run_task(resource_task(oracle, 'log', 200), budget=60)
    assert not result.success
    assert agent.writes == len(records) == agent.memory.writes
    assert result.duration == 60
    assert records[0]['phase'] == 'task' and records[0]['task'] == result.task_id


def test_mode_timeout_resets_to_none(oracle):
    agent = make_agent(oracle)
    agent.begin_task(resource_task(oracle, 'log', 1000))
    agent.state.enter(Mode.EXECUTE, goal=(7.0, 3.0), target=frame(oracle.base('tree'), -1, 7.0, 3.0))
    agent.state.mode_elapsed = 600
    agent.navigator.set_goal((7.0, 3.0), agent.world.position)
    agent.agent_step(agent.world.observe())
    assert agent.state.mode is Mode.EXECUTE and agent.queries == 0

    agent.state.mode_elapsed = 601
    agent.world.clock += 1
    agent.agent_step(agent.world.observe())
    assert agent.state.mode is Mode.EXPLORE
    assert agent.queries == 1
    assert agent.state.mode_elapsed == 0


def test_execute_skill_needs_a_reached_target(oracle):
    agent = make_agent(oracle)
    agent.begin_task(resource_task(oracle, 'water', 100))
    with pytest.raises(RuntimeError):
        agent.execute_skill(agent.state.task)


def test_execute_skill_choices(oracle):
    task = resource_task(oracle, 'water', 100)
    facing = make_agent(oracle, start=(3, 2), yaw=0.0)
    facing.state.reached = True
    assert facing.execute_skill(task) == ('interact', 'water')

    behind = make_agent(oracle, start=(5, 2), yaw=0.0)
    behind.state.reached = True
    action = behind.execute_skill(task)
    assert action[0] == 'turn' and action[1] == pytest.approx(180.0)

    far = make_agent(oracle, start=(8, 2), yaw=180.0)
    far.state.reached = True
    assert far.execute_skill(task) == ('move', -1, 0)

    blind = make_agent(oracle, start=(8, 4), yaw=0.0)
    blind.state.reached = True
    assert blind.execute_skill(task)[0] == 'move'
    assert blind.skill_calls == 1


def test_remembered_water_is_reached_and_harvested(oracle):
    seeded = [frame(oracle.base('water'), -5, 3.0, 2.0, 0.0)]
    agent = make_agent(oracle, start=(7, 3), yaw=90.0, seeded=seeded)
    result = agent.run_task(resource_task(oracle, 'water', 2000))
    assert result.success
    assert result.queries == 1
    assert result.executes >= 20
    assert agent.world.inventory['water'] == 1
    assert result.duration == result.end - result.start


def test_memoryless_agent_uses_the_skill_directly(oracle):
    agent = make_agent(oracle, variant='none', start=(2, 2), yaw=0.0)
    result = agent.run_task(resource_task(oracle, 'water', 500))
    assert result.success
    assert result.duration == 20
    assert result.queries == 0
    assert len(agent.memory) == 0 and agent.memory.writes == 20


def test_explore_returns_per_tick_positions(oracle):
    agent = make_agent(oracle, policy='count_based')
    positions = agent.explore(300)
    assert len(positions) == 300
    assert positions[0] == (2, 2)
    assert len(set(positions)) > 5
    assert agent.memory.writes == agent.writes
    with pytest.raises(ValueError):
        agent.explore(0)


def test_follow_tour_collects_goal_window_frames():
    oracle = EncoderOracle(seed=0, dimension=64)
    world = build_world(ScenarioSpec(scenario='memory_task', memory_task='water', seed=1, variant='fifo'))
    agent = MemoryAgent(world, create_memory('fifo'), oracle)
    goals = agent.follow_tour()
    assert list(goals) == ['water']
    assert [f.time for f in goals['water']] == list(range(100))
    assert world.clock == world.tour[-1].stay_until
    assert agent.writes == len(agent.memory)


def test_select_mode_skips_failed_targets(oracle):
    memory = create_memory('fifo')
    near = frame(oracle.base('water'), 1, 10.0, 12.0)
    far = frame(oracle.base('water'), 2, 40.0, 0.0)
    memory.write(near)
    memory.write(far)
    task = resource_task(oracle, 'water', 100)
    assert select_mode(memory, task, AgentState())[1] is far
    assert select_mode(memory, task, AgentState(), failed=[(40.0, 2.0)])[1] is near
    mode, target = select_mode(memory, task, AgentState(), failed=[(40.0, 2.0), (10.0, 12.0)])
    assert mode is Mode.EXPLORE and target is None


def test_stale_target_falls_back_to_explore(oracle):
    # remembered cow that is no longer in the world
    seeded = [frame(oracle.base('cow'), -5, 7.0, 3.0, 0.0)]
    records = []
    agent = make_agent(oracle, start=(2, 2), seeded=seeded, recorder=records.append, policy='count_based')
    result = agent.run_task(resource_task(oracle, 'beef', 3000))
    assert not result.success
    assert result.queries >= 2
    assert agent.failed_targets == [(7.0, 3.0)]
    modes = [r['mode'] for r in records]
    assert modes[0] == 'execute'
    first_explore = modes.index('explore')
    assert 'execute' not in modes[first_explore:]

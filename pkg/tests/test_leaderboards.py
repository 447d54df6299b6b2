import pytest

from leaderboards import (
    acceptance_checks, aggregate, checks_frame, episodes_frame, get_aba_grid, get_duration_by_position,
    get_exploration_leaderboard, get_memory_task_table, get_success_leaderboard, tasks_frame,
)
from scenario_runner import ScenarioReport


def report(scenario, kind, variant, seed=0, tasks=(), policy='count_based', coverage=None, revisits=None,
           retention=None, solved=None):
    task_records = [{'task_id': f"{i}:x", 'label': label, 'success': ok, 'duration': duration}
                    for i, (label, ok, duration) in enumerate(tasks)]
    wins = sum(1 for t in task_records if t['success']) if solved is None else solved
    return ScenarioReport(
        scenario=scenario, kind=kind, variant=variant, policy=policy, seed=seed, tasks=task_records,
        success_rate=wins / len(task_records) if task_records else 0.0, tasks_solved=wins,
        coverage=coverage, revisits=revisits, retention=retention or {},
        memory={'frames': 10, 'clusters': 2, 'evictions': 0, 'writes': 10},
    )


def aba(variant, seed, first, again, ok=True, pair='water-log'):
    return report(f"aba_sparse[{pair}]", 'aba_sparse', variant, seed,
                  tasks=[('A', True, first), ('B', ok, 500), ("A'", True, again)])


@pytest.fixture
def passing_reports():
    reports = []
    for seed in range(2):
        reports.append(aba('place_event', seed, 1000, 300))
        reports.append(aba('none', seed, 1000, 1000, ok=False))
    for policy, coverage, revisits in (('count_based', 60.0, 1.0), ('random_goal', 45.0, 2.0),
                                       ('memoryless_walk', 30.0, 3.0)):
        reports.append(report('exploration_only', 'exploration_only', 'place_event', policy=policy,
                              coverage=coverage, revisits=revisits))
    reports.append(report('memory_task[water]', 'memory_task', 'place_event', tasks=[('water', True, 90)],
                          retention={'water': 100}))
    reports.append(report('memory_task[water]', 'memory_task', 'fifo', tasks=[('water', False, 3000)],
                          retention={'water': 0}))
    reports.append(report('long_instruction', 'long_instruction', 'place_event', solved=10))
    reports.append(report('long_instruction', 'long_instruction', 'event', solved=8))
    return reports


def test_frames_have_one_row_per_episode_and_task(passing_reports):
    assert len(episodes_frame(passing_reports)) == len(passing_reports)
    tasks = tasks_frame(passing_reports)
    assert len(tasks) == 4 * 3 + 2
    assert list(tasks[tasks['kind'] == 'aba_sparse']['position'][:3]) == [0, 1, 2]


def test_success_leaderboard(passing_reports):
    board = get_success_leaderboard(passing_reports)
    row = board.loc[('aba_sparse[water-log]', 'place_event')]
    assert row['success_rate'] == 1.0 and row['episodes'] == 2
    assert board.loc[('aba_sparse[water-log]', 'none')]['success_rate'] == pytest.approx(0.667)
    assert board['success_rate'].is_monotonic_decreasing


def test_duration_by_position_uses_solved_tasks(passing_reports):
    board = get_duration_by_position(passing_reports)
    assert board.loc[('aba_sparse[water-log]', 'place_event', 2)]['duration'] == 300
    assert board.loc[('aba_sparse[water-log]', 'none', 0)]['duration'] == 1000
    assert ('aba_sparse[water-log]', 'none', 1) not in board.index


def test_exploration_leaderboard(passing_reports):
    board = get_exploration_leaderboard(passing_reports)
    assert list(board.index) == ['count_based', 'random_goal', 'memoryless_walk']
    assert board.loc['random_goal', 'revisits'] == 2.0


def test_aba_grid_and_memory_table(passing_reports):
    extra = aba('place_event', 9, 800, 200, pair='beef-sand')
    grid = get_aba_grid(passing_reports + [extra])
    assert grid.loc['water', 'log'] == 1.0
    assert grid.loc['beef', 'sand'] == 1.0
    table = get_memory_task_table(passing_reports)
    assert table.loc[('memory_task[water]', 'fifo')]['retained'] == 0
    assert table.loc[('memory_task[water]', 'place_event')]['success'] == 1.0


def test_aggregate_recomputes_from_records(passing_reports):
    summary = aggregate(passing_reports)
    assert summary['episodes'] == len(passing_reports)
    assert summary['success']['aba_sparse[water-log]|place_event'] == 1.0
    assert summary['coverage'] == {'count_based': 60.0, 'memoryless_walk': 30.0, 'random_goal': 45.0}
    assert aggregate([]) == {'episodes': 0}


def test_all_orderings_pass(passing_reports):
    checks = acceptance_checks(passing_reports)
    names = [c.name for c in checks]
    assert names == [
        'exploration coverage ordering', 'exploration revisits', 'aba speedup place_event',
        'aba no speedup memoryless', 'aba success margin', 'memory task water', 'long_instruction ordering',
    ]
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]
    frame = checks_frame(checks)
    assert list(frame.columns) == ['name', 'passed', 'detail']


def test_orderings_fail_when_memory_does_not_help(passing_reports):
    slow = [r for r in passing_reports if not (r.kind == 'aba_sparse' and r.variant == 'place_event')]
    slow += [aba('place_event', seed, 1000, 900) for seed in range(2)]
    checks = {c.name: c for c in acceptance_checks(slow)}
    assert not checks['aba speedup place_event'].passed
    assert checks['aba no speedup memoryless'].passed


def test_close_coverage_gap_fails():
    reports = [report('exploration_only', 'exploration_only', 'place_event', policy=p, coverage=c, revisits=1.0)
               for p, c in (('count_based', 50.0), ('random_goal', 45.0), ('memoryless_walk', 20.0))]
    checks = {c.name: c for c in acceptance_checks(reports)}
    assert not checks['exploration coverage ordering'].passed
    assert not checks['exploration revisits'].passed


def test_empty_inputs():
    assert get_success_leaderboard([]).empty
    assert get_duration_by_position([]).empty
    assert get_aba_grid([]).empty
    assert acceptance_checks([]) == []


def test_success_leaderboard_labels_buffer_search(passing_reports):
    board = get_success_leaderboard(passing_reports)
    assert not board['search_buffer'].any()
    passing_reports[0].search_buffer = True
    board = get_success_leaderboard(passing_reports)
    assert board.loc[('aba_sparse[water-log]', 'place_event')]['search_buffer']
    assert not board.loc[('aba_sparse[water-log]', 'none')]['search_buffer']
    assert episodes_frame(passing_reports)['search_buffer'].sum() == 1

"""
Benchmark Leaderboards
Functions to build aggregate tables and ordering checks from per-episode scenario reports
"""

import re
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence

import pandas as pd

ABA_LABEL = re.compile(r'^aba_sparse\[(?P<a>\w+)-(?P<b>\w+)\]$')

# Variant expected to lose each memory task's goal frames
MEMORY_TASK_LOSERS = {'water': 'fifo', 'death_spot': 'place', 'twin_houses': 'event'}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def episodes_frame(reports) -> pd.DataFrame:
    """One row per episode."""
    rows = []
    for r in reports:
        rows.append({
            'scenario': r.scenario,
            'kind': r.kind,
            'variant': r.variant,
            'policy': r.policy,
            'search_buffer': r.search_buffer,
            'seed': r.seed,
            'success_rate': r.success_rate,
            'tasks_solved': r.tasks_solved,
            'steps': r.steps,
            'coverage': r.coverage,
            'revisits': r.revisits,
            'frames': r.memory.get('frames', 0),
            'clusters': r.memory.get('clusters', 0),
            'evictions': r.memory.get('evictions', 0),
            'queries': r.query.get('queries', 0),
            'frames_scored': r.query.get('frames_scored', 0),
        })
    return pd.DataFrame(rows)


def tasks_frame(reports) -> pd.DataFrame:
    """One row per task attempt, with its position in the episode's stream."""
    rows = []
    for r in reports:
        for position, task in enumerate(r.tasks):
            rows.append({
                'scenario': r.scenario,
                'kind': r.kind,
                'variant': r.variant,
                'seed': r.seed,
                'position': position,
                'label': task['label'],
                'success': bool(task['success']),
                'duration': task['duration'],
            })
    return pd.DataFrame(rows, columns=['scenario', 'kind', 'variant', 'seed', 'position', 'label',
                                       'success', 'duration'])


def get_success_leaderboard(reports) -> pd.DataFrame:
    """
    Success rate and tasks solved per scenario and memory variant.

    search_buffer is True for groups where any episode also read unclustered frames.
    """
    df = episodes_frame(reports)
    if df.empty:
        return df
    board = df.groupby(['scenario', 'variant']).agg({
        'success_rate': 'mean',
        'tasks_solved': 'mean',
        'seed': 'count',
        'frames': 'mean',
        'evictions': 'mean',
        'search_buffer': 'max',
    }).rename(columns={'seed': 'episodes'})
    board['success_rate'] = board['success_rate'].round(3)
    board['tasks_solved'] = board['tasks_solved'].round(2)
    return board.sort_values(['success_rate', 'tasks_solved'], ascending=False)


def get_duration_by_position(reports) -> pd.DataFrame:
    """Median duration of successful tasks per stream position (A, B, A' ...)."""
    tasks = tasks_frame(reports)
    if tasks.empty:
        return tasks
    solved = tasks[tasks['success']]
    if solved.empty:
        return solved
    board = solved.groupby(['scenario', 'variant', 'position']).agg({
        'duration': 'median',
        'label': 'first',
        'seed': 'count',
    }).rename(columns={'seed': 'solved'})
    totals = tasks.groupby(['scenario', 'variant', 'position'])['seed'].count()
    board['success_rate'] = (board['solved'] / totals.reindex(board.index)).round(3)
    return board


def get_exploration_leaderboard(reports) -> pd.DataFrame:
    """Coverage and revisit count per exploration policy."""
    df = episodes_frame(reports)
    df = df[df['kind'] == 'exploration_only'] if not df.empty else df
    if df.empty:
        return df
    board = df.groupby('policy').agg(
        coverage=('coverage', 'mean'),
        coverage_std=('coverage', 'std'),
        revisits=('revisits', 'mean'),
        episodes=('seed', 'count'),
    )
    board['coverage'] = board['coverage'].round(2)
    board['revisits'] = board['revisits'].round(2)
    return board.sort_values('coverage', ascending=False)


def get_aba_grid(reports, variant: str = 'place_event') -> pd.DataFrame:
    """Per-(A, B) episode success rate for the ABA-Sparse combinations of one variant."""
    rows = []
    for r in reports:
        match = ABA_LABEL.match(r.scenario)
        if match and r.variant == variant:
            rows.append({'A': match['a'], 'B': match['b'], 'success_rate': r.success_rate})
    if not rows:
        return pd.DataFrame()
    df = pd.DataFrame(rows)
    return df.pivot_table(index='A', columns='B', values='success_rate', aggfunc='mean').round(3)


def get_memory_task_table(reports) -> pd.DataFrame:
    """Image-goal success rate and retained goal frames per memory task and variant."""
    rows = []
    for r in reports:
        if r.kind != 'memory_task':
            continue
        rows.append({
            'scenario': r.scenario,
            'variant': r.variant,
            'success': r.success_rate,
            'retained': sum(r.retention.values()),
        })
    if not rows:
        return pd.DataFrame()
    df = pd.DataFrame(rows)
    return df.groupby(['scenario', 'variant']).agg({'success': 'mean', 'retained': 'mean'}).round(3)


def aggregate(reports) -> Dict[str, object]:
    """Aggregate summary recomputed from episode records only."""
    df = episodes_frame(reports)
    summary = {'episodes': int(len(df))}
    if df.empty:
        return summary
    summary['success'] = {
        f"{scenario}|{variant}": round(float(v), 6)
        for (scenario, variant), v in df.groupby(['scenario', 'variant'])['success_rate'].mean().items()
    }
    summary['tasks_solved'] = {
        f"{scenario}|{variant}": round(float(v), 6)
        for (scenario, variant), v in df.groupby(['scenario', 'variant'])['tasks_solved'].mean().items()
    }
    explore = df[df['kind'] == 'exploration_only']
    if not explore.empty:
        summary['coverage'] = {p: round(float(v), 6) for p, v in explore.groupby('policy')['coverage'].mean().items()}
        summary['revisits'] = {p: round(float(v), 6) for p, v in explore.groupby('policy')['revisits'].mean().items()}
    return summary


def _median_duration(tasks: pd.DataFrame, variant: str, position: int) -> float:
    rows = tasks[(tasks['variant'] == variant) & (tasks['position'] == position) & tasks['success']]
    return float(rows['duration'].median()) if not rows.empty else float('nan')


def acceptance_checks(reports) -> List[CheckResult]:
    """Ordering checks over whatever scenario families the reports contain."""
    checks = []
    df = episodes_frame(reports)
    if df.empty:
        return checks

    explore = get_exploration_leaderboard(reports)
    if {'count_based', 'random_goal', 'memoryless_walk'} <= set(explore.index):
        cov = explore['coverage']
        gaps = (cov['count_based'] - cov['random_goal'], cov['random_goal'] - cov['memoryless_walk'])
        checks.append(CheckResult('exploration coverage ordering', min(gaps) >= 10.0,
                                  f"coverage {cov.to_dict()}"))
        rev = explore['revisits']
        checks.append(CheckResult('exploration revisits', rev['count_based'] < rev['memoryless_walk'],
                                  f"revisits {rev.to_dict()}"))

    tasks = tasks_frame(reports)
    aba = tasks[tasks['kind'] == 'aba_sparse']
    if not aba.empty and {'place_event', 'none'} <= set(aba['variant']):
        ratios = {}
        for variant in ('place_event', 'none'):
            first, again = _median_duration(aba, variant, 0), _median_duration(aba, variant, 2)
            ratios[variant] = again / first if first > 0 else float('nan')
        checks.append(CheckResult('aba speedup place_event', ratios['place_event'] < 0.5,
                                  f"A'/A median ratio {ratios['place_event']:.3f}"))
        checks.append(CheckResult('aba no speedup memoryless', ratios['none'] >= 0.8,
                                  f"A'/A median ratio {ratios['none']:.3f}"))
        rates = df[df['kind'] == 'aba_sparse'].groupby('variant')['success_rate'].mean()
        checks.append(CheckResult('aba success margin', rates['place_event'] - rates['none'] >= 0.2,
                                  f"success {rates.to_dict()}"))

    memory = df[df['kind'] == 'memory_task']
    for scenario, group in memory.groupby('scenario'):
        task = scenario[len('memory_task['):-1]
        rates = group.groupby('variant')['success_rate'].mean()
        loser = MEMORY_TASK_LOSERS.get(task)
        if 'place_event' not in rates:
            continue
        passed = rates['place_event'] >= 0.9
        if loser in rates:
            passed = passed and rates['place_event'] > rates[loser]
        checks.append(CheckResult(f"memory task {task}", bool(passed), f"success {rates.to_dict()}"))

    for kind, rival in (('long_instruction', 'event'), ('long_navigation', 'place')):
        group = df[df['kind'] == kind]
        solved = group.groupby('variant')['tasks_solved'].mean()
        if {'place_event', rival} <= set(solved.index):
            checks.append(CheckResult(f"{kind} ordering", solved['place_event'] >= solved[rival],
                                      f"tasks solved {solved.to_dict()}"))
    return checks


def checks_frame(checks: Sequence[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame([asdict(c) for c in checks], columns=['name', 'passed', 'detail'])

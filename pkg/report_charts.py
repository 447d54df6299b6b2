"""
Report Charts
Plotly bar charts for success rates, task durations and exploration coverage, written as standalone HTML
"""

import logging
from pathlib import Path
from typing import List

import plotly.graph_objects as go

from leaderboards import get_duration_by_position, get_exploration_leaderboard, get_success_leaderboard

logger = logging.getLogger(__name__)

VARIANT_COLORS = {
    'place_event': '#45b7d1',
    'place': '#4ecdc4',
    'event': '#f7b731',
    'fifo': '#ff6b6b',
    'none': '#a5a5a5',
}


def success_chart(reports) -> go.Figure:
    board = get_success_leaderboard(reports).reset_index()
    fig = go.Figure()
    for variant, rows in (board.groupby('variant') if not board.empty else []):
        fig.add_trace(go.Bar(
            x=rows['scenario'],
            y=rows['success_rate'],
            name=variant,
            marker_color=VARIANT_COLORS.get(variant),
            text=rows['success_rate'],
            textposition='auto',
        ))
    fig.update_layout(
        title="Task Success Rate",
        xaxis_title="Scenario",
        yaxis_title="Success rate",
        barmode='group',
        height=450,
    )
    return fig


def duration_chart(reports) -> go.Figure:
    board = get_duration_by_position(reports).reset_index()
    fig = go.Figure()
    if not board.empty:
        board['task'] = board['position'].astype(str) + ':' + board['label']
        for (scenario, variant), rows in board.groupby(['scenario', 'variant']):
            fig.add_trace(go.Bar(
                x=rows['task'],
                y=rows['duration'],
                name=f"{scenario} / {variant}",
                marker_color=VARIANT_COLORS.get(variant),
            ))
    fig.update_layout(
        title="Median Duration of Solved Tasks",
        xaxis_title="Task (stream position)",
        yaxis_title="Ticks",
        barmode='group',
        height=450,
    )
    return fig


def coverage_chart(reports) -> go.Figure:
    board = get_exploration_leaderboard(reports).reset_index()
    fig = go.Figure(data=[
        go.Bar(
            x=board['policy'] if not board.empty else [],
            y=board['coverage'] if not board.empty else [],
            error_y=dict(type='data', array=board['coverage_std'].fillna(0)) if not board.empty else None,
            marker_color='#45b7d1',
            text=board['coverage'] if not board.empty else [],
            textposition='auto',
        )
    ])
    fig.update_layout(
        title="Map Coverage by Exploration Policy",
        xaxis_title="Policy",
        yaxis_title="Coverage (%)",
        height=400,
    )
    return fig


def write_charts(reports, out_dir) -> List[Path]:
    """Write every chart that has data; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    charts = {
        'success.html': success_chart,
        'durations.html': duration_chart,
        'coverage.html': coverage_chart,
    }
    for name, build in charts.items():
        fig = build(reports)
        if not fig.data or all(trace.x is None or len(trace.x) == 0 for trace in fig.data):
            logger.debug("Skipping %s: no data", name)
            continue
        path = out / name
        fig.write_html(str(path), include_plotlyjs='cdn')
        written.append(path)
    return written

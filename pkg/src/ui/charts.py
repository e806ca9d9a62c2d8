"""
Plotly figures for the evaluation dashboard.
"""

from typing import Optional

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

from backend.metrics import MetricsReport


def position_error_figure(report: MetricsReport, n_dials: Optional[int] = None) -> go.Figure:
    """Bar chart of the share of wrong dials at each position (1 is the leftmost)."""
    positions = sorted(report.position_errors)
    if n_dials is not None:
        positions = list(range(1, n_dials + 1))
    frame = pd.DataFrame({
        'position': [str(p) for p in positions],
        'share': [report.position_errors.get(p, 0.0) for p in positions],
    })
    fig = px.bar(frame, x='position', y='share', title='Errors by dial position')
    fig.update_layout(yaxis_tickformat='.0%', xaxis_title='Dial position', yaxis_title='Share of wrong dials')
    return fig


def magnitude_figure(report: MetricsReport) -> go.Figure:
    """Histogram of wrong meters by absolute error, in kWh buckets."""
    frame = pd.DataFrame({
        'bucket': list(report.magnitude_histogram),
        'meters': list(report.magnitude_histogram.values()),
    })
    fig = px.bar(frame, x='bucket', y='meters', title='Absolute error of wrong readings')
    fig.update_layout(xaxis_title='Absolute error (kWh)', yaxis_title='Meters')
    return fig


def tolerance_figure(report: MetricsReport) -> go.Figure:
    tolerances = sorted(report.tolerant_mrr)
    fig = go.Figure(go.Scatter(
        x=tolerances,
        y=[report.tolerant_mrr[t] for t in tolerances],
        mode='lines+markers',
        name='Tolerant MRR',
    ))
    fig.update_layout(
        title='Recognition rate by error tolerance',
        xaxis_title='Tolerance (kWh)',
        yaxis_title='Meters read within tolerance',
        yaxis_tickformat='.0%',
    )
    return fig


def error_kind_figure(report: MetricsReport) -> go.Figure:
    kinds = {kind: count for kind, count in report.error_kinds.items() if count}
    fig = go.Figure(go.Pie(labels=list(kinds), values=list(kinds.values()), hole=0.4))
    fig.update_layout(title='Kinds of dial errors')
    return fig

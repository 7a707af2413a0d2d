"""Figure builders: all statistics come from the CSVs, rendering only draws them."""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import load_regret_quantiles, load_theta_snapshots

FIGURE_KINDS = ("regret_band", "theta_scatter", "replay_proportion")

BREAKPOINT_STYLE = dict(color="red", linestyle="--", linewidth=1.0)
TRUTH_STYLE = dict(color="lightblue", marker="^", s=160, edgecolors="steelblue", zorder=3, label="ground truth")
FIGSIZE = (7.0, 4.5)


@dataclass
class PlotSpec:
    """What to draw: input CSVs, figure kind, output path, and the dashed break rounds."""

    kind: str
    input_csvs: tuple
    output_path: str
    breakpoints: tuple = ()
    truth_points: tuple = ()

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")
        if not self.input_csvs:
            raise ValueError("at least one input CSV is required")


def _draw_breakpoints(ax, breakpoints):
    for round_no in breakpoints:
        ax.axvline(round_no, **BREAKPOINT_STYLE)


def _regret_band_figure(spec: PlotSpec):
    data = {}
    for path in spec.input_csvs:
        data.update(load_regret_quantiles(path))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for policy, series in data.items():
        (line,) = ax.plot(series.rounds, series.mean, label=policy)
        ax.fill_between(series.rounds, series.q05, series.q95, alpha=0.2, color=line.get_color())
    _draw_breakpoints(ax, spec.breakpoints)
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative regret")
    ax.legend(loc="upper left", fontsize=8)
    return fig, ax, data


def _theta_scatter_figure(spec: PlotSpec):
    data = {}
    for path in spec.input_csvs:
        data.update(load_theta_snapshots(path))
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for policy, by_round in data.items():
        rounds = sorted(by_round)
        averages = np.vstack([by_round[r].mean(axis=0) for r in rounds])
        if averages.shape[1] != 2:
            raise ValueError(f"theta_scatter needs 2-dimensional estimates, got {averages.shape[1]}")
        ax.scatter(averages[:, 0], averages[:, 1], s=18, label=policy)
    if spec.truth_points:
        truth = np.asarray(spec.truth_points, dtype=float)
        ax.scatter(truth[:, 0], truth[:, 1], **TRUTH_STYLE)
    ax.set_xlabel("component 0")
    ax.set_ylabel("component 1")
    ax.axhline(0.0, color="gray", linewidth=0.5)
    ax.axvline(0.0, color="gray", linewidth=0.5)
    ax.legend(loc="best", fontsize=8)
    return fig, ax, data


def _replay_proportion_figure(spec: PlotSpec):
    data = {}
    for path in spec.input_csvs:
        data.update(load_regret_quantiles(path))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for policy, series in data.items():
        rounds = series.rounds.astype(float)
        # Per-round regret is 1 - reward, so the running detection proportion
        # is 1 - cumulative regret / t; the 5%/95% band maps accordingly.
        proportion = 1.0 - series.mean / rounds
        upper = 1.0 - series.q05 / rounds
        lower = 1.0 - series.q95 / rounds
        (line,) = ax.plot(rounds, proportion, label=policy)
        ax.fill_between(rounds, lower, upper, alpha=0.2, color=line.get_color())
    _draw_breakpoints(ax, spec.breakpoints)
    ax.set_xlabel("round")
    ax.set_ylabel("proportion of correct selections")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="lower left", fontsize=8)
    return fig, ax, data


_BUILDERS = {
    "regret_band": _regret_band_figure,
    "theta_scatter": _theta_scatter_figure,
    "replay_proportion": _replay_proportion_figure,
}


def build_figure(spec: PlotSpec):
    """Parse, validate and draw; returns (figure, axes, parsed data) without writing."""
    return _BUILDERS[spec.kind](spec)


def render(spec: PlotSpec) -> str:
    """Write the figure for ``spec`` to its output path and return that path."""
    fig, _, _ = build_figure(spec)
    try:
        fig.savefig(spec.output_path, dpi=150)
    finally:
        plt.close(fig)
    return spec.output_path

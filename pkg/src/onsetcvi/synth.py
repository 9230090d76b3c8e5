"""Synthetic staged event-stream fixtures with known change points.

Desk-scale stand-in for a monitored test rig: event times are uniform over
the test, informative features shift their mean at stage changes, and
nuisance features are time-independent Gaussian mixtures. The mixtures form
compact, well-separated clusters whose onsets all sit at the start of the
test, which is exactly the failure mode of shape-based validity indices that
the onset criterion avoids.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import Dataset

__all__ = ["generate_fixture", "write_truth", "load_truth"]


def generate_fixture(
    stage_durations,
    n_events: int,
    n_informative: int = 4,
    n_nuisance: int = 15,
    informative_sep: float = 4.0,
    nuisance_sep: float = 12.0,
    nuisance_components=(4, 7, 10),
    noise_sigma: float = 1.0,
    seed: int = 0,
):
    """Build a labeled staged dataset.

    Returns (dataset, change_points) where change_points are the stage start
    times. Nuisance features are split into len(nuisance_components) groups;
    features within a group share the same per-event mixture component, so
    subsets drawn from one group carry a clean time-independent cluster
    structure with the given component count.
    """
    durations = [float(d) for d in stage_durations]
    if not durations or any(d <= 0 for d in durations):
        raise ValueError("stage durations must be positive")
    if n_events < len(durations):
        raise ValueError("need at least one event per stage")
    if n_informative < 1:
        raise ValueError("need at least one informative feature")
    rng = np.random.default_rng(seed)

    total = float(sum(durations))
    starts = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
    times = np.sort(rng.uniform(0.0, total, size=n_events))
    stage = np.searchsorted(starts, times, side="right") - 1
    n_stages = len(durations)

    cols = []
    names = []
    for j in range(n_informative):
        means = informative_sep * rng.permutation(n_stages)
        cols.append(means[stage] + rng.normal(0.0, noise_sigma, n_events))
        names.append(f"sig{j}")

    if n_nuisance:
        group_of = [g % len(nuisance_components) for g in range(n_nuisance)]
        component = {
            g: rng.integers(nuisance_components[g], size=n_events)
            for g in set(group_of)
        }
        for j in range(n_nuisance):
            g = group_of[j]
            means = nuisance_sep * rng.permutation(nuisance_components[g])
            cols.append(
                means[component[g]] + rng.normal(0.0, noise_sigma, n_events)
            )
            names.append(f"nui{j}")

    ds = Dataset(
        axis=times,
        features=np.column_stack(cols),
        feature_names=tuple(names),
        labels=stage,
        axis_end=total,
    )
    return ds, [float(s) for s in starts]


def write_truth(path, change_points, stage_durations, axis_end: float) -> None:
    with open(Path(path), "w") as fh:
        json.dump(
            {
                "change_points": [float(c) for c in change_points],
                "stage_durations": [float(d) for d in stage_durations],
                "axis_end": float(axis_end),
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")


def load_truth(path) -> dict:
    with open(Path(path)) as fh:
        return json.load(fh)

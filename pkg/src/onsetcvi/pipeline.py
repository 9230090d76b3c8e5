"""End-to-end comparison runs and histogram interpretation helpers.

One sweep produces both criteria's inputs: the onset criterion selects its
top partitions per K, while the shape baseline votes the best subset per K
over the *same* partitions, so any difference in the resulting onset
histograms is attributable to the criterion alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset
from .search import (
    OnsetHistogram,
    SearchConfig,
    VoteWeights,
    accumulate_histogram,
    run_search,
    select_best,
    select_by_vote_per_k,
)

__all__ = [
    "ComparisonRun",
    "run_comparison",
    "default_weights",
    "top_bins",
    "bin_of",
    "matched_top_bins",
    "covered_change_points",
]


def default_weights() -> VoteWeights:
    w = {"silhouette": 1.0, "davies_bouldin": 1.0, "calinski_harabasz": 1.0}
    return VoteWeights(w1=dict(w), w2=dict(w))


@dataclass
class ComparisonRun:
    result: object  # SearchResult with shape scores attached
    onset_selected: dict  # {K: [SearchRecord]}
    shape_selected: dict  # {K: SearchRecord}, per-K best vote
    onset_hist: OnsetHistogram
    shape_hist: OnsetHistogram


def run_comparison(
    ds: Dataset, cfg: SearchConfig, weights: VoteWeights | None = None
) -> ComparisonRun:
    """Sweep once, then select with both criteria and build both histograms."""
    if weights is None:
        weights = default_weights()
    res = run_search(ds, replace(cfg, compute_shape=True))
    onset_selected = select_best(res, cfg)
    shape_selected = select_by_vote_per_k(res.records, weights)
    origin = float(ds.axis[0])
    onset_hist = accumulate_histogram(
        onset_selected, cfg.bin_width, origin, ds.axis_end
    )
    shape_hist = accumulate_histogram(
        list(shape_selected.values()), cfg.bin_width, origin, ds.axis_end
    )
    return ComparisonRun(
        result=res,
        onset_selected=onset_selected,
        shape_selected=shape_selected,
        onset_hist=onset_hist,
        shape_hist=shape_hist,
    )


def bin_of(hist: OnsetHistogram, t: float) -> int:
    """Index of the bin containing axis value t (clamped to the last bin)."""
    origin = float(hist.bin_edges[0])
    idx = int((t - origin) // hist.bin_width)
    return min(max(idx, 0), len(hist.counts) - 1)


def top_bins(hist: OnsetHistogram, n: int) -> list[int]:
    """Indices of the n tallest bins; count ties break toward earlier bins."""
    order = sorted(range(len(hist.counts)), key=lambda i: (-hist.counts[i], i))
    return order[:n]


def matched_top_bins(hist: OnsetHistogram, change_points, n: int):
    """Match the n tallest bins to change points within +-1 bin.

    Returns (all_matched, covered) where all_matched says every tallest bin
    sits within one bin of some change point, and covered is the set of
    distinct change points hit.
    """
    cp_bins = {bin_of(hist, cp): cp for cp in change_points}
    covered = set()
    all_matched = True
    for b in top_bins(hist, n):
        hits = [cp for cb, cp in cp_bins.items() if abs(cb - b) <= 1]
        if hits:
            covered.update(hits)
        else:
            all_matched = False
    return all_matched, covered


def covered_change_points(hist: OnsetHistogram, change_points) -> set:
    """Change points with at least one onset within +-1 bin (any count)."""
    counts = hist.counts
    covered = set()
    for cp in change_points:
        b = bin_of(hist, cp)
        lo, hi = max(b - 1, 0), min(b + 1, len(counts) - 1)
        if counts[lo : hi + 1].sum() > 0:
            covered.add(cp)
    return covered

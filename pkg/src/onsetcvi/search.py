"""Feature-subset x cluster-count sweep with onset-histogram accumulation,
plus the shape-CVI voting baseline.

The sweep is a deterministic map over independent (subset, K) tasks: each
task's clustering seed derives from the master seed and the task key, so
results are identical regardless of scheduling or worker count. Combinations
that produce empty clusters are recorded as skipped, never silently dropped;
attempted == len(records) + len(skipped) always holds.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterator

import numpy as np

from .clustering import EmptyClusterError, gk_array, harden, kmeans_array, standardize
from .dataset import Dataset, FeatureSubset
from .validity import (
    CVI_DIRECTIONS,
    DegenerateOnsetsError,
    PriorOnsets,
    calinski_harabasz_value,
    davies_bouldin_value,
    entropy,
    first_occurrences,
    kl_divergence,
    onset_distribution,
    rand_index,
)

__all__ = [
    "SearchConfig",
    "SearchRecord",
    "SearchResult",
    "OnsetHistogram",
    "VoteWeights",
    "SearchFailedError",
    "SHAPE_CVIS",
    "enumerate_subsets",
    "run_search",
    "select_best",
    "accumulate_histogram",
    "voting_scheme",
    "vote_from_records",
    "select_by_vote_per_k",
    "materialize_assignments",
    "evaluate_against_truth",
]

SHAPE_CVIS = ("silhouette", "davies_bouldin", "calinski_harabasz")


class SearchFailedError(RuntimeError):
    """No combination survived the sweep."""


@dataclass(frozen=True)
class SearchConfig:
    k_min: int = 3
    k_max: int = 10
    subset_size: int = 4
    restarts: int = 5
    engine: str = "kmeans"  # "kmeans" or "gk"
    top_n: int | None = 20
    quantile: float | None = None
    seed: int = 0
    priors: dict | None = None  # {K: PriorOnsets}
    bin_width: float = 0.5
    compute_shape: bool = False
    jobs: int = 1
    kmeans_max_iter: int = 100
    gk_fuzziness: float = 2.0
    gk_tol: float = 1e-6
    gk_max_iter: int = 300

    def __post_init__(self):
        if self.k_min < 2:
            raise ValueError("k_min must be >= 2")
        if self.k_max < self.k_min:
            raise ValueError("k_max must be >= k_min")
        if self.subset_size < 1:
            raise ValueError("subset_size must be >= 1")
        if self.engine not in ("kmeans", "gk"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if (self.top_n is None) == (self.quantile is None):
            raise ValueError("exactly one of top_n / quantile must be set")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.quantile is not None and not (0 < self.quantile < 1):
            raise ValueError("quantile must lie in (0, 1)")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.priors is not None:
            for k in self.k_range:
                prior = self.priors.get(k)
                if prior is None or len(prior.distribution) != k:
                    raise ValueError(f"prior for K={k} missing or wrong length")

    @property
    def k_range(self) -> range:
        return range(self.k_min, self.k_max + 1)


@dataclass(frozen=True)
class SearchRecord:
    subset: FeatureSubset
    k: int
    score: float
    kind: str  # "onset_entropy" or "onset_kl"
    onsets: tuple  # raw (unshifted) axis values, sorted ascending
    objective: float
    seed: int  # per-task clustering seed, for regenerating assignments
    shape_scores: dict | None = None

    @property
    def direction(self) -> str:
        return CVI_DIRECTIONS[self.kind]

    def to_record(self) -> dict:
        rec = {
            "subset": list(self.subset),
            "k": self.k,
            "score": self.score,
            "kind": self.kind,
            "onsets": list(self.onsets),
            "objective": self.objective,
            "seed": self.seed,
        }
        if self.shape_scores is not None:
            rec["shape_scores"] = dict(self.shape_scores)
        return rec


@dataclass
class SearchResult:
    records: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    attempted: int = 0
    complete: bool = True


@dataclass(frozen=True)
class OnsetHistogram:
    """Binned counts of onsets pooled across selected partitions."""

    bin_width: float
    bin_edges: np.ndarray
    counts: np.ndarray
    contributing_partitions: int


@dataclass(frozen=True)
class VoteWeights:
    """Per-CVI weights for the two voting stages (K vote, then subset vote)."""

    w1: dict
    w2: dict

    def __post_init__(self):
        for name, w in (("w1", self.w1), ("w2", self.w2)):
            if not w or any(v < 0 for v in w.values()):
                raise ValueError(f"{name} weights must be non-negative")
            if all(v == 0 for v in w.values()):
                raise ValueError(f"{name} weights cannot all be zero")
            unknown = set(w) - set(SHAPE_CVIS)
            if unknown:
                raise ValueError(f"unknown CVIs in {name}: {sorted(unknown)}")


def enumerate_subsets(d: int, p: int) -> Iterator[FeatureSubset]:
    """All C(d, p) subsets of p feature columns, lexicographic."""
    if not 1 <= p <= d:
        raise ValueError(f"need 1 <= p <= d, got p={p}, d={d}")
    for combo in combinations(range(d), p):
        yield FeatureSubset(combo)


def _task_seed(master_seed: int, subset_index: int, k: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(subset_index, k))
    return int(ss.generate_state(1)[0])


def _cluster_labels(
    x_sub: np.ndarray, k: int, cfg: SearchConfig, seed: int, x2=None
):
    """0-based hard labels and engine objective for one (subset, K) task."""
    if cfg.engine == "kmeans":
        labels, _, sse = kmeans_array(
            x_sub,
            k,
            restarts=cfg.restarts,
            seed=seed,
            max_iter=cfg.kmeans_max_iter,
            x2=x2,
        )
        return labels, sse
    u, _, _, objective, _, _ = gk_array(
        x_sub,
        k,
        fuzziness=cfg.gk_fuzziness,
        tol=cfg.gk_tol,
        max_iter=cfg.gk_max_iter,
        seed=seed,
        restarts=cfg.restarts,
    )
    labels = u.argmax(axis=1)
    if len(np.unique(labels)) != k:
        raise EmptyClusterError(f"hardened GK partition has empty clusters (k={k})")
    return labels, objective


def _sweep_subset(x_std, axis, axis_end, cfg, subset_index, subset):
    """All K values for one subset. Returns (records, skipped)."""
    x_sub = np.ascontiguousarray(x_std[:, list(subset)])
    x2 = (x_sub * x_sub).sum(axis=1)
    records, skipped = [], []
    labelings = {}
    for k in cfg.k_range:
        seed = _task_seed(cfg.seed, subset_index, k)
        try:
            labels, objective = _cluster_labels(x_sub, k, cfg, seed, x2=x2)
        except EmptyClusterError as exc:
            skipped.append({"subset": list(subset), "k": k, "reason": str(exc)})
            continue
        onsets = first_occurrences(labels + 1, axis)
        try:
            dist = onset_distribution(onsets, axis_end)
        except DegenerateOnsetsError as exc:
            skipped.append({"subset": list(subset), "k": k, "reason": str(exc)})
            continue
        if cfg.priors is not None:
            score = kl_divergence(dist.deltas, cfg.priors[k].distribution)
            kind = "onset_kl"
        else:
            score = entropy(dist.deltas) / math.log2(k)
            kind = "onset_entropy"
        if not math.isfinite(score):
            skipped.append(
                {"subset": list(subset), "k": k, "reason": "non-finite onset score"}
            )
            continue
        labelings[k] = labels
        records.append(
            SearchRecord(
                subset=subset,
                k=k,
                score=float(score),
                kind=kind,
                onsets=tuple(float(t) for t in onsets),
                objective=float(objective),
                seed=seed,
            )
        )
    if cfg.compute_shape and labelings:
        records = _attach_shape_scores(x_sub, records, labelings)
    return records, skipped


def _attach_shape_scores(x_sub, records, labelings):
    """Shape CVIs for every surviving K of one subset.

    The pairwise distance matrix is built once per subset (float32) and
    reused across all K; it dominates the cost of the shape baseline.
    """
    from .validity import pairwise_distances, silhouette_many

    dist = pairwise_distances(x_sub.astype(np.float32))
    sil = silhouette_many(dist, {rec.k: labelings[rec.k] for rec in records})
    out = []
    for rec in records:
        labels = labelings[rec.k]
        shape = {
            "silhouette": sil[rec.k],
            "davies_bouldin": davies_bouldin_value(x_sub, labels, rec.k),
            "calinski_harabasz": calinski_harabasz_value(x_sub, labels, rec.k),
        }
        out.append(replace(rec, shape_scores=shape))
    return out


# module-level worker state for ProcessPoolExecutor
_WORKER = {}


def _init_worker(x_std, axis, axis_end, cfg):
    _WORKER["args"] = (x_std, axis, axis_end, cfg)


def _worker_sweep(item):
    subset_index, subset = item
    x_std, axis, axis_end, cfg = _WORKER["args"]
    return subset_index, _sweep_subset(x_std, axis, axis_end, cfg, subset_index, subset)


def run_search(ds: Dataset, cfg: SearchConfig) -> SearchResult:
    """Cluster and score every (K, subset) combination.

    Deterministic for a fixed cfg.seed regardless of cfg.jobs. Interrupting
    the sweep returns the consistent partial result with complete=False.
    """
    subsets = list(enumerate_subsets(ds.d, cfg.subset_size))
    x_std = standardize(ds.features)
    attempted = len(subsets) * len(cfg.k_range)
    per_subset: dict[int, tuple] = {}
    interrupted = False
    try:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(
                max_workers=cfg.jobs,
                initializer=_init_worker,
                initargs=(x_std, ds.axis, ds.axis_end, cfg),
            ) as pool:
                for idx, out in pool.map(
                    _worker_sweep, enumerate(subsets), chunksize=32
                ):
                    per_subset[idx] = out
        else:
            for idx, subset in enumerate(subsets):
                per_subset[idx] = _sweep_subset(
                    x_std, ds.axis, ds.axis_end, cfg, idx, subset
                )
    except KeyboardInterrupt:
        interrupted = True

    result = SearchResult(attempted=attempted, complete=not interrupted)
    for idx in sorted(per_subset):
        recs, skip = per_subset[idx]
        result.records.extend(recs)
        result.skipped.extend(skip)
    result.records.sort(key=lambda r: (r.k, r.subset.indices))
    result.skipped.sort(key=lambda s: (s["k"], s["subset"]))
    if interrupted:
        result.attempted = sum(
            len(r) + len(s) for r, s in per_subset.values()
        )
        return result
    if not result.records:
        raise SearchFailedError("every combination was skipped")
    return result


def _rank_key(direction: str):
    sign = -1.0 if direction == "maximize" else 1.0
    return lambda rec: (sign * rec.score, rec.subset.indices)


def select_best(res: SearchResult, cfg: SearchConfig) -> dict:
    """Per-K selection: top_n records by score, or the per-K quantile cut.

    Ties break deterministically by (score, lexicographic subset).
    """
    by_k: dict[int, list] = {}
    for rec in res.records:
        by_k.setdefault(rec.k, []).append(rec)
    selected = {}
    for k in sorted(by_k):
        direction = by_k[k][0].direction
        group = sorted(by_k[k], key=_rank_key(direction))
        if cfg.top_n is not None:
            selected[k] = group[: cfg.top_n]
        else:
            scores = np.array([r.score for r in group])
            if direction == "maximize":
                thr = float(np.quantile(scores, cfg.quantile))
                selected[k] = [r for r in group if r.score >= thr]
            else:
                thr = float(np.quantile(scores, 1.0 - cfg.quantile))
                selected[k] = [r for r in group if r.score <= thr]
    return selected


def accumulate_histogram(
    selected, bin_width: float, axis_origin: float, axis_end: float
) -> OnsetHistogram:
    """Histogram of all onsets of the selected partitions on the raw axis.

    Bin edges sit on multiples of bin_width (the first bin starts at the
    largest multiple <= axis_origin), so histograms of different runs share
    one grid. The last (possibly partial) bin covers axis_end, and an onset
    exactly at axis_end falls into it.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    records = _flatten_selected(selected)
    anchor = math.floor(round(axis_origin / bin_width, 9)) * bin_width
    span = axis_end - anchor
    n_bins = max(1, math.ceil(round(span / bin_width, 9)))
    edges = anchor + bin_width * np.arange(n_bins + 1)
    counts = np.zeros(n_bins, dtype=np.int64)
    for rec in records:
        onsets = np.asarray(rec.onsets, dtype=float)
        if onsets.min() < axis_origin or onsets.max() > max(axis_end, edges[-1]):
            raise ValueError("onset outside the histogram range")
        idx = np.minimum((onsets - anchor) // bin_width, n_bins - 1).astype(int)
        np.add.at(counts, idx, 1)
    return OnsetHistogram(
        bin_width=bin_width,
        bin_edges=edges,
        counts=counts,
        contributing_partitions=len(records),
    )


def _flatten_selected(selected) -> list:
    if isinstance(selected, dict):
        out = []
        for k in sorted(selected):
            out.extend(selected[k])
        return out
    return list(selected)


def _cvi_best(values: dict, kind: str):
    """Best key for one CVI among {key: value}; value ties go to the lowest key."""
    direction = CVI_DIRECTIONS[kind]
    sign = -1.0 if direction == "maximize" else 1.0
    items = sorted(
        values.items(), key=lambda kv: (sign * _finite(kv[1], direction), kv[0])
    )
    return items[0][0]


def _borda(candidates: list, weights: dict) -> list:
    """Weighted Borda scores over candidates [(key, shape_scores), ...]."""
    m = len(candidates)
    scores = {key: 0.0 for key, _ in candidates}
    for kind, w in weights.items():
        if w == 0:
            continue
        direction = CVI_DIRECTIONS[kind]
        sign = -1.0 if direction == "maximize" else 1.0
        ranked = sorted(
            candidates, key=lambda c: (sign * _finite(c[1][kind], direction), c[0])
        )
        for pos, (key, _) in enumerate(ranked):
            scores[key] += w * (m - 1 - pos)
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def _finite(v: float, direction: str) -> float:
    # +inf CH is a legitimate best value; keep ordering well-defined
    if math.isinf(v):
        return math.copysign(1e300, v)
    return v


def vote_from_records(records, weights: VoteWeights):
    """Two-stage vote over shape-scored records.

    Stage 1 (per subset): each CVI votes for its best K; the weighted
    plurality tally picks nb_clusters(S), ties to the smallest K. Stage 2:
    weighted Borda rank aggregation over the (S, nb_clusters(S)) candidates,
    ties to the lexicographic subset. Returns (best_subset, best_k).
    """
    by_subset: dict[tuple, dict[int, dict]] = {}
    for rec in records:
        if rec.shape_scores is None:
            raise ValueError("records lack shape scores; sweep with compute_shape")
        by_subset.setdefault(rec.subset.indices, {})[rec.k] = rec.shape_scores
    if not by_subset:
        raise SearchFailedError("no records to vote on")

    stage1 = {}
    for subset, per_k in sorted(by_subset.items()):
        tally: dict[int, float] = {}
        for kind, w in weights.w1.items():
            if w == 0:
                continue
            best_k = _cvi_best({k: s[kind] for k, s in per_k.items()}, kind)
            tally[best_k] = tally.get(best_k, 0.0) + w
        stage1[subset] = min(
            tally, key=lambda k: (-tally[k], k)
        )  # plurality, ties -> smallest K

    candidates = [
        (subset, by_subset[subset][stage1[subset]]) for subset in sorted(stage1)
    ]
    best_subset = _borda(candidates, weights.w2)[0][0]
    return FeatureSubset(best_subset), stage1[best_subset]


def select_by_vote_per_k(records, weights: VoteWeights) -> dict:
    """Best subset at each fixed K by weighted Borda vote over subsets.

    This is the per-K application of the voting baseline used when comparing
    onset histograms at matched K values. Returns {K: SearchRecord}.
    """
    by_k: dict[int, list] = {}
    for rec in records:
        if rec.shape_scores is None:
            raise ValueError("records lack shape scores; sweep with compute_shape")
        by_k.setdefault(rec.k, []).append(rec)
    out = {}
    for k in sorted(by_k):
        group = {rec.subset.indices: rec for rec in by_k[k]}
        ranked = _borda(
            [(s, rec.shape_scores) for s, rec in sorted(group.items())], weights.w2
        )
        out[k] = group[ranked[0][0]]
    return out


def voting_scheme(ds: Dataset, cfg: SearchConfig, weights: VoteWeights) -> dict:
    """Full shape-CVI baseline: sweep, vote, and return the winning partition."""
    res = run_search(ds, replace(cfg, compute_shape=True))
    best_subset, best_k = vote_from_records(res.records, weights)
    rec = next(
        r
        for r in res.records
        if r.subset.indices == best_subset.indices and r.k == best_k
    )
    assignments = materialize_assignments(ds, rec, cfg)
    return {
        "best_subset": best_subset,
        "best_k": best_k,
        "assignments": assignments,
        "result": res,
    }


def materialize_assignments(ds: Dataset, rec: SearchRecord, cfg: SearchConfig) -> np.ndarray:
    """Re-cluster one record with its stored seed to recover assignments.

    The sweep keeps only scores and onsets (storing 30k+ full partitions is
    wasteful); clustering is deterministic per seed, so regeneration is exact.
    """
    x_sub = standardize(ds.features)[:, list(rec.subset)]
    labels, _ = _cluster_labels(np.ascontiguousarray(x_sub), rec.k, cfg, rec.seed)
    return labels + 1


def evaluate_against_truth(ds: Dataset, selected, cfg: SearchConfig, truth=None) -> dict:
    """Per-K Rand-index summary of selected partitions against ground truth.

    Returns {K: {"min", "max", "median", "n_outliers", "values"}} with
    outliers by the 1.5*IQR rule.
    """
    if truth is None:
        truth = ds.labels
    if truth is None:
        raise ValueError("ground-truth labels required")
    out = {}
    for k, group in sorted(_group_by_k(selected).items()):
        values = np.array(
            [
                rand_index(materialize_assignments(ds, rec, cfg), truth)
                for rec in group
            ]
        )
        out[k] = summarize_rand(values)
    return out


def summarize_rand(values: np.ndarray) -> dict:
    q1, q3 = np.percentile(values, [25, 75])
    iqr = q3 - q1
    outliers = (values < q1 - 1.5 * iqr) | (values > q3 + 1.5 * iqr)
    return {
        "min": float(values.min()),
        "max": float(values.max()),
        "median": float(np.median(values)),
        "n_outliers": int(outliers.sum()),
        "values": [float(v) for v in values],
    }


def _group_by_k(selected) -> dict:
    if isinstance(selected, dict):
        return selected
    by_k: dict[int, list] = {}
    for rec in selected:
        by_k.setdefault(rec.k, []).append(rec)
    return by_k

"""Partition quality criteria.

The onset criterion looks only at *when* each cluster first appears: the
inter-onset gaps, normalized by the test horizon, form a probability vector.
Without prior knowledge the best partition maximizes the normalized Shannon
entropy of that vector (onsets spread evenly over the test); with a prior it
minimizes the KL divergence to the expected gap distribution. The shape
criteria (silhouette, Davies-Bouldin, Calinski-Harabasz) and the Rand index
are the conventional baselines.

All logarithms are base 2; scores are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import Partition
from .dataset import FeatureSubset

__all__ = [
    "OnsetDistribution",
    "PriorOnsets",
    "CviScore",
    "DegenerateOnsetsError",
    "CVI_DIRECTIONS",
    "first_occurrences",
    "onset_distribution",
    "extract_onsets",
    "entropy",
    "cross_entropy",
    "kl_divergence",
    "onset_cvi",
    "silhouette",
    "silhouette_from_distances",
    "silhouette_many",
    "pairwise_distances",
    "davies_bouldin",
    "davies_bouldin_value",
    "calinski_harabasz",
    "calinski_harabasz_value",
    "rand_index",
]

# score polarity, so downstream selection never hard-codes it
CVI_DIRECTIONS = {
    "onset_entropy": "maximize",
    "onset_kl": "minimize",
    "silhouette": "maximize",
    "davies_bouldin": "minimize",
    "calinski_harabasz": "maximize",
}


class DegenerateOnsetsError(ValueError):
    """All onsets sit at the end of the axis; no gap structure exists."""


def _check_prob(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(p)) or p.min() < 0:
        raise ValueError(f"{name} is not a valid probability vector")
    if abs(p.sum() - 1.0) > 1e-8:
        raise ValueError(f"{name} must sum to 1, got {p.sum()!r}")
    return p


@dataclass(frozen=True)
class OnsetDistribution:
    """Cluster onsets shifted so the first sits at 0, with the gap vector.

    deltas[k] = (onset[k+1] - onset[k]) / t_end, the last gap closing against
    t_end; the deltas sum to 1 and coincident onsets contribute zero gaps.
    """

    onsets: np.ndarray
    t_end: float
    deltas: np.ndarray

    def __post_init__(self):
        onsets = np.asarray(self.onsets, dtype=float)
        deltas = np.asarray(self.deltas, dtype=float)
        if onsets[0] != 0.0:
            raise ValueError("onsets must be shifted so the first is 0")
        if np.any(np.diff(onsets) < 0):
            raise ValueError("onsets must be sorted ascending")
        if self.t_end <= 0:
            raise DegenerateOnsetsError("t_end must be positive")
        if deltas.shape != onsets.shape or abs(deltas.sum() - 1.0) > 1e-12:
            raise ValueError("deltas must match onsets and sum to 1")
        object.__setattr__(self, "onsets", onsets)
        object.__setattr__(self, "deltas", deltas)

    @property
    def k(self) -> int:
        return len(self.onsets)


@dataclass(frozen=True)
class PriorOnsets:
    """Expected gap distribution (e.g. from a physics-based model)."""

    distribution: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "distribution", _check_prob(self.distribution, "prior")
        )


@dataclass(frozen=True)
class CviScore:
    value: float
    kind: str
    k: int
    subset: FeatureSubset | None = None

    def __post_init__(self):
        if self.kind not in CVI_DIRECTIONS:
            raise ValueError(f"unknown CVI kind {self.kind!r}")

    @property
    def direction(self) -> str:
        return CVI_DIRECTIONS[self.kind]

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "subset": None if self.subset is None else list(self.subset),
            "value": self.value,
            "direction": self.direction,
        }


def first_occurrences(assignments: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Axis value of the first event of each cluster, sorted ascending
    (temporal order, not label order). Assignments use ids 1..K."""
    assignments = np.asarray(assignments)
    axis = np.asarray(axis, dtype=float)
    if assignments.shape != axis.shape:
        raise ValueError("partition and axis lengths differ")
    k = int(assignments.max())
    onsets = np.empty(k)
    for c in range(1, k + 1):
        hits = np.nonzero(assignments == c)[0]
        if hits.size == 0:
            raise ValueError(f"cluster {c} never occurs")
        onsets[c - 1] = axis[hits[0]]
    return np.sort(onsets)


def onset_distribution(onsets, axis_end: float) -> OnsetDistribution:
    """Build the shifted gap distribution from raw (unshifted) onsets."""
    onsets = np.sort(np.asarray(onsets, dtype=float))
    t_end = float(axis_end) - onsets[0]
    if t_end <= 0:
        raise DegenerateOnsetsError(
            f"all onsets at the axis end (t_end={t_end})"
        )
    shifted = onsets - onsets[0]
    gaps = np.diff(np.append(shifted, t_end))
    return OnsetDistribution(onsets=shifted, t_end=t_end, deltas=gaps / t_end)


def extract_onsets(
    p: Partition, axis: np.ndarray, axis_end: float | None = None
) -> OnsetDistribution:
    """Onset distribution of a partition over the given axis.

    axis_end defaults to the last axis value; pass the dataset's axis_end when
    the test outlasted the final event.
    """
    axis = np.asarray(axis, dtype=float)
    if axis_end is None:
        axis_end = float(axis[-1])
    return onset_distribution(first_occurrences(p.assignments, axis), axis_end)


def entropy(p) -> float:
    """Shannon entropy in bits, with 0*log2(0) := 0."""
    p = _check_prob(p, "p")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def cross_entropy(p_est, p_true) -> float:
    """-sum p_est*log2(p_true); +inf when p_true has a zero that p_est uses."""
    p_est = _check_prob(p_est, "p_est")
    p_true = _check_prob(p_true, "p_true")
    if p_est.shape != p_true.shape:
        raise ValueError("p_est and p_true lengths differ")
    mask = p_est > 0
    if np.any(p_true[mask] == 0):
        return float("inf")
    return float(-(p_est[mask] * np.log2(p_true[mask])).sum())


def kl_divergence(p_est, p_true) -> float:
    """KL(p_est || p_true) in bits; equals cross_entropy - entropy."""
    p_est = _check_prob(p_est, "p_est")
    p_true = _check_prob(p_true, "p_true")
    if p_est.shape != p_true.shape:
        raise ValueError("p_est and p_true lengths differ")
    mask = p_est > 0
    if np.any(p_true[mask] == 0):
        return float("inf")
    pe, pt = p_est[mask], p_true[mask]
    return float((pe * np.log2(pe / pt)).sum())


def onset_cvi(
    p: Partition,
    axis: np.ndarray,
    prior: PriorOnsets | None = None,
    axis_end: float | None = None,
) -> CviScore:
    """Onset criterion of a partition.

    Without a prior: normalized entropy of the gap distribution in [0, 1]
    (maximize). With a prior: KL divergence to the prior gaps (minimize).
    """
    dist = extract_onsets(p, axis, axis_end=axis_end)
    if prior is not None:
        return CviScore(
            value=kl_divergence(dist.deltas, prior.distribution),
            kind="onset_kl",
            k=p.k,
            subset=p.subset,
        )
    if p.k < 2:
        raise ValueError("normalized entropy undefined for K=1; supply a prior")
    value = entropy(dist.deltas) / np.log2(p.k)
    return CviScore(value=float(value), kind="onset_entropy", k=p.k, subset=p.subset)


def pairwise_distances(x: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Full Euclidean distance matrix, computed in row chunks."""
    x = np.ascontiguousarray(x)
    n = x.shape[0]
    sq = (x * x).sum(axis=1)
    out = np.empty((n, n), dtype=x.dtype)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d2 = sq[lo:hi, None] - 2.0 * (x[lo:hi] @ x.T) + sq[None, :]
        np.sqrt(np.clip(d2, 0, None, out=d2), out=out[lo:hi])
    return out


def silhouette_many(dist: np.ndarray, labelings: dict) -> dict:
    """Mean silhouettes for several labelings of the same distance matrix.

    labelings maps K -> 0-based labels; the per-cluster distance sums for all
    labelings are computed in a single matmul against the (expensive)
    precomputed matrix.
    """
    n = dist.shape[0]
    ks = sorted(labelings)
    width = sum(ks)
    onehot = np.zeros((n, width), dtype=dist.dtype)
    rows = np.arange(n)
    offset = 0
    for k in ks:
        onehot[rows, offset + labelings[k]] = 1.0
        offset += k
    sums = dist @ onehot
    out = {}
    offset = 0
    for k in ks:
        out[k] = _silhouette_from_sums(
            sums[:, offset : offset + k], labelings[k], k
        )
        offset += k
    return out


def silhouette_from_distances(dist: np.ndarray, labels0: np.ndarray, k: int) -> float:
    """Mean silhouette from a precomputed distance matrix (0-based labels)."""
    n = dist.shape[0]
    onehot = np.zeros((n, k), dtype=dist.dtype)
    onehot[np.arange(n), labels0] = 1.0
    sums = dist @ onehot  # (n, k) summed distance to each cluster
    return _silhouette_from_sums(sums, labels0, k)


def _silhouette_from_sums(sums: np.ndarray, labels0: np.ndarray, k: int) -> float:
    n = sums.shape[0]
    counts = np.bincount(labels0, minlength=k)
    own = sums[np.arange(n), labels0]
    own_count = counts[labels0]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(own_count > 1, own / np.maximum(own_count - 1, 1), 0.0)
        means = sums / np.maximum(counts, 1)
        means[:, counts == 0] = np.inf
        means[np.arange(n), labels0] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s = np.where(own_count > 1, s, 0.0)  # singleton convention: s = 0
    return float(s.mean())


def silhouette(x: np.ndarray, p: Partition) -> CviScore:
    """Mean silhouette coefficient (Euclidean), in [-1, 1], maximize."""
    if p.k < 2:
        raise ValueError("silhouette undefined for K=1")
    dist = pairwise_distances(np.asarray(x, dtype=float))
    value = silhouette_from_distances(dist, p.assignments - 1, p.k)
    return CviScore(value=value, kind="silhouette", k=p.k, subset=p.subset)


def _centroid_stats(x: np.ndarray, labels0: np.ndarray, k: int):
    n, d = x.shape
    counts = np.bincount(labels0, minlength=k).astype(float)
    centers = np.empty((k, d))
    for j in range(d):
        centers[:, j] = np.bincount(labels0, weights=x[:, j], minlength=k) / counts
    return counts, centers


def davies_bouldin_value(x: np.ndarray, labels0: np.ndarray, k: int) -> float:
    counts, centers = _centroid_stats(x, labels0, k)
    scatter = np.zeros(k)
    dists = np.linalg.norm(x - centers[labels0], axis=1)
    for i in range(k):
        scatter[i] = dists[labels0 == i].mean()
    sep = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    pair = scatter[:, None] + scatter[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sep > 0, pair / sep, np.inf)
    np.fill_diagonal(ratio, -np.inf)
    return float(ratio.max(axis=1).mean())


def davies_bouldin(x: np.ndarray, p: Partition) -> CviScore:
    """Davies-Bouldin index (minimize); +inf on coincident centroids."""
    if p.k < 2:
        raise ValueError("Davies-Bouldin undefined for K=1")
    value = davies_bouldin_value(np.asarray(x, dtype=float), p.assignments - 1, p.k)
    return CviScore(value=value, kind="davies_bouldin", k=p.k, subset=p.subset)


def calinski_harabasz_value(x: np.ndarray, labels0: np.ndarray, k: int) -> float:
    n = x.shape[0]
    counts, centers = _centroid_stats(x, labels0, k)
    within = float(((x - centers[labels0]) ** 2).sum())
    between = float((counts[:, None] * (centers - x.mean(axis=0)) ** 2).sum())
    if within == 0 or n == k:
        return float("inf")
    return (between / (k - 1)) / (within / (n - k))


def calinski_harabasz(x: np.ndarray, p: Partition) -> CviScore:
    """Calinski-Harabasz ratio (maximize); +inf when within-scatter is 0."""
    if p.k < 2:
        raise ValueError("Calinski-Harabasz undefined for K=1")
    value = calinski_harabasz_value(np.asarray(x, dtype=float), p.assignments - 1, p.k)
    return CviScore(value=value, kind="calinski_harabasz", k=p.k, subset=p.subset)


def rand_index(assignments, truth) -> float:
    """Fraction of event pairs on which two labelings agree."""
    a = np.asarray(assignments)
    b = np.asarray(truth)
    if a.shape != b.shape:
        raise ValueError("labelings have different lengths")
    n = a.size
    if n < 2:
        raise ValueError("Rand index undefined for N < 2")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(contingency, (ai, bi), 1)

    def comb2(v):
        v = v.astype(np.int64)
        return (v * (v - 1) // 2).sum()

    total = n * (n - 1) // 2
    same_both = comb2(contingency.ravel())
    same_a = comb2(contingency.sum(axis=1))
    same_b = comb2(contingency.sum(axis=0))
    agree = total + 2 * same_both - same_a - same_b
    return float(agree / total)

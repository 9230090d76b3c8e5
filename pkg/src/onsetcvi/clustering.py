"""Hard partitions from feature subsets: K-means and Gustafson-Kessel.

Both engines z-score each selected feature column before computing distances
(event features span wildly different units), run deterministically for a
fixed seed, and refuse partitions with empty clusters rather than repairing
them: the sweep discards those subsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, FeatureSubset

__all__ = [
    "Partition",
    "ClusterParams",
    "EmptyClusterError",
    "standardize",
    "kmeans",
    "gk_cluster",
    "harden",
]


class EmptyClusterError(RuntimeError):
    """Best run left at least one cluster empty; discard this subset."""


@dataclass(frozen=True)
class ClusterParams:
    """Engine parameters behind a partition.

    centers: (K, p). Fuzzy engines additionally carry memberships (N, K) with
    rows summing to 1, and per-cluster volume-normalized covariances
    (K, p, p) with unit determinant.
    """

    centers: np.ndarray
    memberships: np.ndarray | None = None
    covariances: np.ndarray | None = None
    converged: bool = True
    regularized: bool = False

    def __post_init__(self):
        if self.memberships is not None:
            rowsums = self.memberships.sum(axis=1)
            if not np.allclose(rowsums, 1.0, atol=1e-9):
                raise ValueError("membership rows must sum to 1 within 1e-9")
        if self.covariances is not None:
            for c in self.covariances:
                if not np.allclose(c, c.T, atol=1e-8):
                    raise ValueError("cluster covariance not symmetric")


@dataclass(frozen=True)
class Partition:
    """Hard assignment of every event to one of K clusters (ids 1..K)."""

    assignments: np.ndarray
    k: int
    subset: FeatureSubset
    objective: float
    params: ClusterParams

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int)
        if a.ndim != 1:
            raise ValueError("assignments must be 1-D")
        if a.min() < 1 or a.max() > self.k:
            raise ValueError(f"cluster ids must lie in 1..{self.k}")
        if len(np.unique(a)) != self.k:
            raise EmptyClusterError(f"partition has empty clusters (k={self.k})")
        a = np.ascontiguousarray(a)
        a.flags.writeable = False
        object.__setattr__(self, "assignments", a)


def standardize(x: np.ndarray) -> np.ndarray:
    """Column-wise z-score; constant columns pass through unscaled."""
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (x - mu) / sd


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))  # all mass on chosen points: duplicates
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def lloyd(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100):
    """One seeded k-means++/Lloyd run on pre-standardized data.

    Returns (labels0, centers, sse, empty) where labels0 are 0-based and
    empty flags a final empty cluster. The within-cluster SSE is asserted
    non-increasing across iterations.
    """
    n, p = x.shape
    centers = _kmeans_pp(x, k, rng)
    x2 = (x * x).sum(axis=1)
    labels = np.full(n, -1)
    prev_sse = np.inf
    for _ in range(max_iter):
        d2 = x2[:, None] - 2.0 * (x @ centers.T) + (centers * centers).sum(axis=1)
        new_labels = d2.argmin(axis=1)
        sse = float(np.maximum(d2[np.arange(n), new_labels], 0.0).sum())
        assert sse <= prev_sse * (1 + 1e-9) + 1e-12, "k-means objective increased"
        prev_sse = sse
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        for j in range(p):
            col = np.bincount(labels, weights=x[:, j], minlength=k)
            centers[:, j] = np.where(counts > 0, col / np.maximum(counts, 1), centers[:, j])
    empty = bool((np.bincount(labels, minlength=k) == 0).any())
    return labels, centers, prev_sse, empty


def kmeans_array(
    x: np.ndarray,
    k: int,
    restarts: int = 5,
    seed: int = 0,
    max_iter: int = 100,
    x2: np.ndarray | None = None,
):
    """Best-of-restarts k-means on pre-standardized data.

    All restarts run batched (one distance matmul per iteration covers every
    restart) but each draws from its own seeded stream, so results match a
    sequential execution. Returns (labels0, centers, sse). Raises
    EmptyClusterError when every restart ends with an empty cluster (e.g. k
    exceeds the number of distinct points). Ties between restarts break by
    restart index.
    """
    n, p = x.shape
    r_n = restarts
    if x2 is None:
        x2 = (x * x).sum(axis=1)
    rngs = [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        for r in range(r_n)
    ]

    # k-means++ seeding, vectorized over restarts; sampling by inverse-cdf
    centers = np.empty((r_n, k, p))
    for r in range(r_n):
        centers[r, 0] = x[int(rngs[r].integers(n))]
    d2 = x2[None, :] - 2.0 * (centers[:, 0, :] @ x.T) + (centers[:, 0, :] ** 2).sum(1)[:, None]
    np.clip(d2, 0.0, None, out=d2)
    for j in range(1, k):
        cdf = np.cumsum(d2, axis=1)
        for r in range(r_n):
            total = cdf[r, -1]
            if total <= 0:
                idx = int(rngs[r].integers(n))  # duplicates: all mass used up
            else:
                u = rngs[r].random() * total
                idx = min(int(np.searchsorted(cdf[r], u, side="right")), n - 1)
            centers[r, j] = x[idx]
        new_d2 = x2[None, :] - 2.0 * (centers[:, j, :] @ x.T) + (centers[:, j, :] ** 2).sum(1)[:, None]
        np.minimum(d2, np.clip(new_d2, 0.0, None), out=d2)

    # batched Lloyd iterations; the per-iteration objective-descent assertion
    # lives in the single-run lloyd() variant, the batch only needs the final
    # SSE. x2 is constant per row, so argmin needs only the cross terms.
    offsets = (np.arange(r_n) * k)[None, :]  # label offsets per restart
    labels = np.full((n, r_n), -1)
    tiled_cols = [np.tile(x[:, j], r_n) for j in range(p)]
    for _ in range(max_iter):
        flat_centers = centers.reshape(r_n * k, p)
        dist = x @ flat_centers.T
        dist *= -2.0
        dist += (flat_centers**2).sum(1)
        new_labels = dist.reshape(n, r_n, k).argmin(axis=2)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        flat = (labels + offsets).T.ravel()
        counts = np.bincount(flat, minlength=r_n * k)
        for j in range(p):
            col = np.bincount(flat, weights=tiled_cols[j], minlength=r_n * k)
            upd = np.where(counts > 0, col / np.maximum(counts, 1), flat_centers[:, j])
            centers[:, :, j] = upd.reshape(r_n, k)

    flat_centers = centers.reshape(r_n * k, p)
    dist = x2[:, None] - 2.0 * (x @ flat_centers.T) + (flat_centers**2).sum(1)
    mind = np.take_along_axis(dist.reshape(n, r_n, k), labels[:, :, None], axis=2)
    sse = np.clip(mind[:, :, 0], 0.0, None).sum(axis=0)

    best = None
    for r in range(r_n):
        if (np.bincount(labels[:, r], minlength=k) == 0).any():
            continue
        if best is None or sse[r] < best[2]:
            best = (labels[:, r].copy(), centers[r], float(sse[r]))
    if best is None:
        raise EmptyClusterError(f"empty cluster in every restart (k={k})")
    return best


def kmeans(
    ds: Dataset,
    subset: FeatureSubset,
    k: int,
    restarts: int = 5,
    seed: int = 0,
    max_iter: int = 100,
) -> Partition:
    """Hard K-means partition of the subset columns, best of `restarts` runs
    by total within-cluster SSE on z-scored features."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > ds.n:
        raise ValueError(f"k={k} exceeds N={ds.n}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    x = standardize(ds.features[:, list(subset)])
    labels, centers, sse = kmeans_array(x, k, restarts=restarts, seed=seed, max_iter=max_iter)
    return Partition(
        assignments=labels + 1,
        k=k,
        subset=subset,
        objective=sse,
        params=ClusterParams(centers=centers),
    )


def _gk_memberships(d2: np.ndarray, fuzziness: float) -> np.ndarray:
    # u_ik proportional to d_ik^(-2/(m-1)); the floor keeps the power and its
    # row sum finite down to fuzziness ~1.3 (1e-60^-3 = 1e180 < float max)
    ratio = np.clip(d2, 1e-60, None) ** (-1.0 / (fuzziness - 1.0))
    return ratio / ratio.sum(axis=1, keepdims=True)


def gk_array(
    x: np.ndarray,
    k: int,
    fuzziness: float = 2.0,
    tol: float = 1e-6,
    max_iter: int = 300,
    seed: int = 0,
    restarts: int = 5,
):
    """Gustafson-Kessel fuzzy clustering on pre-standardized data.

    Fuzzy c-means update with a per-cluster Mahalanobis metric induced by the
    volume-normalized covariance (unit determinant), so elongated clusters
    are measured in their own frame. Like k-means the run restarts from
    several seedings and keeps the lowest final objective (the elongated-
    cluster optimum is a narrow basin; a single init often lands in the
    spherical split instead). Ties break by restart index. Returns
    (memberships, centers, covariances, objective, converged, regularized).
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        out = _gk_single(x, k, fuzziness, tol, max_iter, seed, r)
        if best is None or out[3] < best[3]:
            best = out
    return best


def _gk_single(x, k, fuzziness, tol, max_iter, seed, restart):
    n, p = x.shape
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart,)))
    centers = _kmeans_pp(x, k, rng)
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    u = _gk_memberships(d2, fuzziness)
    eye = np.eye(p)
    covs = np.repeat(eye[None], k, axis=0)
    converged = False
    regularized = False
    objective = np.inf
    for _ in range(max_iter):
        um = u**fuzziness
        weights = um.sum(axis=0)
        centers = (um.T @ x) / weights[:, None]
        for i in range(k):
            diff = x - centers[i]
            f = (um[:, i, None] * diff).T @ diff / weights[i]
            det = float(np.linalg.det(f))
            if det <= 0 or not np.isfinite(det):
                regularized = True
            f = f + (1e-8 * np.trace(f) / p) * eye
            det = float(np.linalg.det(f))
            if det <= 0 or not np.isfinite(det):
                # fully degenerate cluster: fall back to the identity metric
                regularized = True
                f = eye.copy()
                det = 1.0
            covs[i] = f / det ** (1.0 / p)
            a = det ** (1.0 / p) * np.linalg.inv(f)
            d2[:, i] = np.einsum("nd,de,ne->n", diff, a, diff)
        d2 = np.clip(d2, 1e-300, None)
        u_new = _gk_memberships(d2, fuzziness)
        shift = float(np.abs(u_new - u).max())
        u = u_new
        objective = float((u**fuzziness * d2).sum())
        if shift < tol:
            converged = True
            break
    return u, centers, covs, objective, converged, regularized


def gk_cluster(
    ds: Dataset,
    subset: FeatureSubset,
    k: int,
    fuzziness: float = 2.0,
    tol: float = 1e-6,
    max_iter: int = 300,
    seed: int = 0,
    restarts: int = 5,
) -> Partition:
    """Gustafson-Kessel partition, hardened by largest membership."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if fuzziness <= 1:
        raise ValueError("fuzziness must exceed 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = standardize(ds.features[:, list(subset)])
    u, centers, covs, objective, converged, regularized = gk_array(
        x, k, fuzziness=fuzziness, tol=tol, max_iter=max_iter, seed=seed,
        restarts=restarts,
    )
    params = ClusterParams(
        centers=centers,
        memberships=u,
        covariances=covs,
        converged=converged,
        regularized=regularized,
    )
    return Partition(
        assignments=harden(params),
        k=k,
        subset=subset,
        objective=objective,
        params=params,
    )


def harden(params: ClusterParams) -> np.ndarray:
    """Per row, the cluster with the largest membership (ties: lowest id)."""
    if params.memberships is None:
        raise ValueError("no memberships to harden")
    return params.memberships.argmax(axis=1) + 1

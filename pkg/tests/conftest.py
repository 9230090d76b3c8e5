import numpy as np
import pytest

from onsetcvi.dataset import Dataset


@pytest.fixture
def staged_ds():
    """Small 3-stage dataset: one feature tracks the stage, one is noise."""
    rng = np.random.default_rng(42)
    n = 240
    axis = np.sort(rng.uniform(0.0, 30.0, size=n))
    stage = np.searchsorted([0.0, 10.0, 20.0], axis, side="right") - 1
    sig = 5.0 * stage + rng.normal(0.0, 0.4, n)
    noise = rng.normal(0.0, 1.0, n)
    return Dataset(
        axis=axis,
        features=np.column_stack([sig, noise]),
        feature_names=("sig", "noise"),
        labels=stage,
        axis_end=30.0,
    )


def diagonal_stripes(n=150, length=4.0, offset=2.0, sigma=0.15, seed=0):
    """Two parallel stripes along the x=y diagonal, offset perpendicular.

    Per-axis z-scoring cannot undo diagonal elongation, so spherical k-means
    cuts across both stripes while an adaptive-metric engine separates them.
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(-length / 2, length / 2, n)
    perp = np.array([1.0, -1.0]) / np.sqrt(2)
    a = np.column_stack([t, t]) + rng.normal(0.0, sigma, (n, 2))
    b = np.column_stack([t, t]) + offset * perp + rng.normal(0.0, sigma, (n, 2))
    x = np.vstack([a, b])
    truth = np.repeat([0, 1], n)
    ds = Dataset(axis=np.arange(2 * n, dtype=float), features=x,
                 feature_names=("u", "v"), labels=truth)
    return ds, truth


@pytest.fixture
def blob_xy():
    """Four well-separated 2-D blobs with ground-truth labels."""
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0], [8.0, 8.0]])
    labels = np.repeat(np.arange(4), 50)
    x = centers[labels] + rng.normal(0.0, 0.5, size=(200, 2))
    return x, labels

"""Feature-table ingestion and preprocessing.

A dataset is a time-ordered (or load-ordered, cycle-ordered, ...) table of
event features with a monotone axis column and optional integer ground-truth
labels. All preprocessing operations are pure: they return new datasets.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "FeatureSubset",
    "DatasetError",
    "load_dataset",
    "save_dataset",
    "moving_median",
    "decimate",
    "truncate_levels",
]


class DatasetError(ValueError):
    """Malformed input file or violated dataset invariant."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FeatureSubset:
    """Strictly increasing column indices into a dataset's feature matrix."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) == 0:
            raise ValueError("subset must contain at least one feature")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"subset indices must be strictly increasing: {idx}")
        if idx[0] < 0:
            raise ValueError(f"negative feature index: {idx}")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class Dataset:
    """Immutable feature table with a monotone axis.

    axis_end is the end of the test on the axis (the paper-independent horizon
    T); it defaults to the last axis value but may exceed it when the test ran
    longer than the last detected event.
    """

    axis: np.ndarray
    features: np.ndarray
    feature_names: tuple[str, ...]
    labels: np.ndarray | None = None
    axis_end: float | None = None

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {feats.shape}")
        n, d = feats.shape
        if n < 1 or d < 1:
            raise DatasetError(f"need N >= 1 and d >= 1, got N={n}, d={d}")
        if axis.shape != (n,):
            raise DatasetError(f"axis length {axis.shape} does not match N={n}")
        if len(self.feature_names) != d:
            raise DatasetError(f"{len(self.feature_names)} names for {d} features")
        if not np.all(np.isfinite(axis)):
            raise DatasetError("non-finite values in axis")
        if not np.all(np.isfinite(feats)):
            raise DatasetError("non-finite values in features")
        bad = np.nonzero(np.diff(axis) < 0)[0]
        if bad.size:
            raise DatasetError(f"axis not monotone at row {int(bad[0]) + 1}")
        end = float(axis[-1]) if self.axis_end is None else float(self.axis_end)
        if end < axis[-1]:
            raise DatasetError(f"axis_end={end} precedes last axis value {axis[-1]}")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=int)
            if labels.shape != (n,):
                raise DatasetError("labels length does not match N")
            labels = _readonly(labels)
        object.__setattr__(self, "axis", _readonly(axis))
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "axis_end", end)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def replace(self, **kw) -> "Dataset":
        base = dict(
            axis=self.axis,
            features=self.features,
            feature_names=self.feature_names,
            labels=self.labels,
            axis_end=self.axis_end,
        )
        base.update(kw)
        return Dataset(**base)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def load_dataset(
    path,
    axis_column: str = "time",
    label_column: str | None = None,
    axis_end: float | None = None,
) -> Dataset:
    """Load a CSV feature table.

    The header row names the columns; `axis_column` must be monotone
    non-decreasing; an optional `label_column` holds integer class ids; every
    other column is a feature. Missing or non-numeric cells are rejected with
    the offending row number. A JSON sidecar (same stem, .json) may declare
    axis_end and units.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if axis_column not in header:
            raise DatasetError(f"{path}: axis column {axis_column!r} not in header")
        if label_column is not None and label_column not in header:
            raise DatasetError(f"{path}: label column {label_column!r} not in header")
        axis_idx = header.index(axis_column)
        label_idx = header.index(label_column) if label_column else None
        feat_idx = [
            i for i in range(len(header)) if i != axis_idx and i != label_idx
        ]
        if not feat_idx:
            raise DatasetError(f"{path}: no feature columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {lineno}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DatasetError(
                    f"{path}: row {lineno}: non-numeric or missing cell"
                ) from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    axis = table[:, axis_idx]
    bad = np.nonzero(np.diff(axis) < 0)[0]
    if bad.size:
        raise DatasetError(f"{path}: axis not monotone at row {int(bad[0]) + 2}")
    labels = table[:, label_idx].astype(int) if label_idx is not None else None
    if label_idx is not None and not np.allclose(table[:, label_idx], labels):
        raise DatasetError(f"{path}: non-integer values in label column")

    sidecar = _sidecar_path(path)
    if axis_end is None and sidecar.exists():
        with open(sidecar) as fh:
            meta = json.load(fh)
        axis_end = meta.get("axis_end")

    return Dataset(
        axis=axis,
        features=table[:, feat_idx],
        feature_names=tuple(header[i] for i in feat_idx),
        labels=labels,
        axis_end=axis_end,
    )


def save_dataset(
    ds: Dataset,
    path,
    axis_column: str = "time",
    label_column: str = "label",
    sidecar: bool = True,
) -> None:
    """Write a dataset back to CSV (+ JSON sidecar with axis_end)."""
    path = Path(path)
    header = [axis_column, *ds.feature_names]
    if ds.labels is not None:
        header.append(label_column)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(ds.axis[i]))]
            row += [repr(float(v)) for v in ds.features[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)
    if sidecar:
        with open(_sidecar_path(path), "w") as fh:
            json.dump({"axis_end": ds.axis_end}, fh, sort_keys=True)
            fh.write("\n")


def moving_median(ds: Dataset, window: int) -> Dataset:
    """Centered running median of each feature column.

    Near the boundaries the window shrinks symmetrically (radius
    min(h, i, N-1-i)) so it always stays fully inside the data and keeps an
    odd length. Axis and labels are untouched.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and positive, got {window}")
    if window > ds.n:
        raise ValueError(f"window {window} exceeds N={ds.n}")
    if window == 1:
        return ds
    h = window // 2
    n = ds.n
    out = np.empty_like(ds.features)
    # interior rows share a full window; use a vectorized sliding view
    sw = np.lib.stride_tricks.sliding_window_view(ds.features, window, axis=0)
    out[h : n - h] = np.median(sw, axis=-1)
    for i in range(h):
        # radius i at both ends
        out[i] = np.median(ds.features[: 2 * i + 1], axis=0)
        out[n - 1 - i] = np.median(ds.features[n - 1 - 2 * i :], axis=0)
    return ds.replace(features=out)


def decimate(ds: Dataset, stride: int) -> Dataset:
    """Keep rows 0, stride, 2*stride, ...; axis_end is preserved."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride == 1:
        return ds
    sel = slice(None, None, stride)
    return ds.replace(
        axis=ds.axis[sel],
        features=ds.features[sel],
        labels=None if ds.labels is None else ds.labels[sel],
    )


def truncate_levels(ds: Dataset, keep_durations) -> Dataset:
    """Keep only the first `keep_durations[j]` axis units of each ground-truth
    level, in label order of first appearance. Builds the imbalanced variant.
    """
    if ds.labels is None:
        raise DatasetError("truncate_levels requires ground-truth labels")
    keep_durations = [float(x) for x in keep_durations]
    order = []
    for lab in ds.labels:
        if lab not in order:
            order.append(int(lab))
    if len(keep_durations) != len(order):
        raise ValueError(
            f"{len(keep_durations)} durations for {len(order)} labels"
        )
    dur = dict(zip(order, keep_durations))
    keep = np.zeros(ds.n, dtype=bool)
    start = 0
    for i in range(1, ds.n + 1):
        if i == ds.n or ds.labels[i] != ds.labels[start]:
            level_start = ds.axis[start]
            d = dur[int(ds.labels[start])]
            keep[start:i] = (ds.axis[start:i] - level_start) < d
            start = i
    if not keep.any():
        raise DatasetError("truncation removed every row")
    return ds.replace(
        axis=ds.axis[keep], features=ds.features[keep], labels=ds.labels[keep]
    )

"""Deterministic run artifacts.

Every file written here is a pure function of (config, seed, dataset): no
timestamps, stable key order, repr-based float formatting, LF line endings.
Re-running an identical configuration must reproduce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .search import OnsetHistogram, SearchConfig, materialize_assignments

__all__ = [
    "config_to_dict",
    "config_hash",
    "write_json",
    "write_histogram_csv",
    "write_selected_csv",
    "read_selected_csv",
    "write_eval_csv",
]


def config_to_dict(cfg: SearchConfig) -> dict:
    out = {
        "k_min": cfg.k_min,
        "k_max": cfg.k_max,
        "subset_size": cfg.subset_size,
        "restarts": cfg.restarts,
        "engine": cfg.engine,
        "top_n": cfg.top_n,
        "quantile": cfg.quantile,
        "seed": cfg.seed,
        "bin_width": cfg.bin_width,
        "kmeans_max_iter": cfg.kmeans_max_iter,
        "gk_fuzziness": cfg.gk_fuzziness,
        "gk_tol": cfg.gk_tol,
        "gk_max_iter": cfg.gk_max_iter,
    }
    if cfg.priors is not None:
        out["priors"] = {
            str(k): [float(v) for v in p.distribution]
            for k, p in sorted(cfg.priors.items())
        }
    return out


def config_hash(cfg: SearchConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_json(path, payload: dict) -> None:
    with open(Path(path), "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_histogram_csv(path, hist: OnsetHistogram) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_start", "bin_end", "count"])
        for i, c in enumerate(hist.counts):
            writer.writerow(
                [
                    repr(float(hist.bin_edges[i])),
                    repr(float(hist.bin_edges[i + 1])),
                    int(c),
                ]
            )


def partition_column(k: int, rank: int) -> str:
    return f"k{k}_p{rank:02d}"


def write_selected_csv(path, ds: Dataset, selected: dict, cfg: SearchConfig) -> None:
    """One row per event; one column of cluster ids per selected partition.

    Assignments are regenerated from each record's stored seed. A label
    column is included when the dataset has ground truth, so evaluation can
    run from this file alone.
    """
    columns = []
    for k in sorted(selected):
        for rank, rec in enumerate(selected[k]):
            columns.append(
                (partition_column(k, rank), materialize_assignments(ds, rec, cfg))
            )
    header = ["index", "axis"]
    if ds.labels is not None:
        header.append("label")
    header += [name for name, _ in columns]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            row = [i, repr(float(ds.axis[i]))]
            if ds.labels is not None:
                row.append(int(ds.labels[i]))
            row += [int(a[i]) for _, a in columns]
            writer.writerow(row)


def read_selected_csv(path):
    """Returns (labels or None, {column_name: assignments array})."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    table = {name: np.array([r[j] for r in rows]) for j, name in enumerate(header)}
    labels = table["label"].astype(int) if "label" in table else None
    partitions = {
        name: table[name].astype(int) for name in header if name.startswith("k")
    }
    return labels, partitions


def write_eval_csv(path, summaries: dict) -> None:
    """summaries: {criterion_name: {K: {"min","max","median","n_outliers"}}}."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "criterion", "min", "max", "median", "n_outliers"])
        ks = sorted({k for per_k in summaries.values() for k in per_k})
        for k in ks:
            for crit in sorted(summaries):
                s = summaries[crit].get(k)
                if s is None:
                    continue
                writer.writerow(
                    [
                        k,
                        crit,
                        repr(s["min"]),
                        repr(s["max"]),
                        repr(s["median"]),
                        s["n_outliers"],
                    ]
                )

"""Command-line front end.

Subcommands: preprocess, synth, search, vote, eval, stream, report.
Exit codes: 0 success, 1 usage/config/validation error, 2 search failed.
Run parameters live in a YAML config so runs are archivable; every artifact
embeds the config hash and seed.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import artifacts
from .dataset import (
    Dataset,
    DatasetError,
    decimate,
    load_dataset,
    moving_median,
    save_dataset,
    truncate_levels,
)
from .pipeline import covered_change_points, default_weights, matched_top_bins
from .search import (
    SearchConfig,
    SearchFailedError,
    VoteWeights,
    accumulate_histogram,
    run_search,
    select_best,
    select_by_vote_per_k,
    vote_from_records,
)
from .stream import OnsetTracker, StreamError
from .synth import generate_fixture, load_truth, write_truth
from .validity import PriorOnsets, rand_index
from .search import summarize_rand

ENV_OUTPUT_DIR = "ONSETCVI_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def _load_yaml(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return cfg


def _dataset_from_config(cfg: dict) -> Dataset:
    sec = cfg.get("dataset")
    if not sec or "path" not in sec:
        raise ConfigError("config needs a dataset section with a path")
    ds = load_dataset(
        sec["path"],
        axis_column=sec.get("axis_column", "time"),
        label_column=sec.get("label_column"),
        axis_end=sec.get("axis_end"),
    )
    pre = cfg.get("preprocess") or {}
    if pre.get("median_window"):
        ds = moving_median(ds, int(pre["median_window"]))
    if pre.get("stride"):
        ds = decimate(ds, int(pre["stride"]))
    if pre.get("truncate_durations"):
        ds = truncate_levels(ds, pre["truncate_durations"])
    return ds


def _search_config(cfg: dict, seed: int | None, jobs: int) -> SearchConfig:
    sec = cfg.get("search")
    if not sec:
        raise ConfigError("config needs a search section")
    selection = sec.get("selection", {"top_n": 20})
    priors = sec.get("priors")
    if priors is not None:
        priors = {int(k): PriorOnsets(np.asarray(v, float)) for k, v in priors.items()}
    try:
        return SearchConfig(
            k_min=int(sec.get("k_min", 3)),
            k_max=int(sec.get("k_max", 10)),
            subset_size=int(sec.get("subset_size", 4)),
            restarts=int(sec.get("restarts", 5)),
            engine=sec.get("engine", "kmeans"),
            top_n=selection.get("top_n"),
            quantile=selection.get("quantile"),
            seed=int(sec["seed"] if seed is None else seed),
            priors=priors,
            bin_width=float(sec.get("bin_width", 0.5)),
            jobs=jobs,
            gk_fuzziness=float(sec.get("gk_fuzziness", 2.0)),
            gk_tol=float(sec.get("gk_tol", 1e-6)),
            gk_max_iter=int(sec.get("gk_max_iter", 300)),
        )
    except KeyError as exc:
        raise ConfigError(f"search config missing key: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _vote_weights(cfg: dict) -> VoteWeights:
    sec = cfg.get("vote")
    if not sec:
        return default_weights()
    try:
        return VoteWeights(w1=dict(sec["w1"]), w2=dict(sec["w2"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad vote weights: {exc}") from exc


def _resolve_outdir(output_dir) -> Path:
    out = output_dir or os.environ.get(ENV_OUTPUT_DIR) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
def cli():
    """Onset-based clustering validation toolkit."""


@cli.command("synth")
@click.option("--durations", default="10,10,10,10,10,10,10", show_default=True)
@click.option("--n-events", default=4000, show_default=True)
@click.option("--n-informative", default=4, show_default=True)
@click.option("--n-nuisance", default=15, show_default=True)
@click.option("--informative-sep", default=4.0, show_default=True)
@click.option("--nuisance-sep", default=12.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--output", required=True, type=click.Path())
@click.option("--truth", "truth_path", default=None, type=click.Path())
def cmd_synth(durations, n_events, n_informative, n_nuisance, informative_sep,
              nuisance_sep, seed, output, truth_path):
    """Generate a staged synthetic fixture with ground-truth change points."""
    durs = [float(x) for x in durations.split(",") if x.strip()]
    ds, change_points = generate_fixture(
        durs,
        n_events,
        n_informative=n_informative,
        n_nuisance=n_nuisance,
        informative_sep=informative_sep,
        nuisance_sep=nuisance_sep,
        seed=seed,
    )
    save_dataset(ds, output)
    if truth_path:
        write_truth(truth_path, change_points, durs, ds.axis_end)
    click.echo(f"wrote {output} (N={ds.n}, d={ds.d}, seed={seed})")


@cli.command("preprocess")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", required=True, type=click.Path())
@click.option("--axis-column", default="time", show_default=True)
@click.option("--label-column", default=None)
@click.option("--median-window", default=None, type=int)
@click.option("--stride", default=None, type=int)
@click.option("--truncate", default=None, help="comma-separated per-level durations")
def cmd_preprocess(input_path, output, axis_column, label_column, median_window,
                   stride, truncate):
    """Moving-median filter, decimation, and level truncation."""
    ds = load_dataset(input_path, axis_column=axis_column, label_column=label_column)
    if median_window:
        ds = moving_median(ds, median_window)
    if stride:
        ds = decimate(ds, stride)
    if truncate:
        ds = truncate_levels(ds, [float(x) for x in truncate.split(",")])
    save_dataset(ds, output, axis_column=axis_column)
    click.echo(f"wrote {output} (N={ds.n}, d={ds.d})")


@cli.command("search")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--output-dir", default=None, type=click.Path())
@click.option("--seed", default=None, type=int, help="override the config seed")
@click.option("--jobs", default=1, show_default=True)
def cmd_search(config_path, output_dir, seed, jobs):
    """Onset-criterion sweep: manifest, selected partitions, onset histogram."""
    raw = _load_yaml(config_path)
    ds = _dataset_from_config(raw)
    cfg = _search_config(raw, seed, jobs)
    out = _resolve_outdir(output_dir)
    res = run_search(ds, cfg)
    selected = select_best(res, cfg)
    hist = accumulate_histogram(
        selected, cfg.bin_width, float(ds.axis[0]), ds.axis_end
    )
    manifest = {
        "config": artifacts.config_to_dict(cfg),
        "config_hash": artifacts.config_hash(cfg),
        "seed": cfg.seed,
        "criterion": "onset",
        "n_events": ds.n,
        "n_features": ds.d,
        "attempted": res.attempted,
        "n_records": len(res.records),
        "n_skipped": len(res.skipped),
        "skipped": res.skipped,
        "selected": {
            str(k): [r.to_record() for r in recs] for k, recs in selected.items()
        },
        "complete": res.complete,
    }
    artifacts.write_json(out / "manifest.json", manifest)
    artifacts.write_histogram_csv(out / "histogram.csv", hist)
    artifacts.write_selected_csv(out / "selected_partitions.csv", ds, selected, cfg)
    click.echo(
        f"search done: {res.attempted} attempted, {len(res.skipped)} skipped, "
        f"artifacts in {out}"
    )


@cli.command("vote")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--output-dir", default=None, type=click.Path())
@click.option("--seed", default=None, type=int)
@click.option("--jobs", default=1, show_default=True)
def cmd_vote(config_path, output_dir, seed, jobs):
    """Shape-CVI voting baseline over the same sweep grid."""
    raw = _load_yaml(config_path)
    ds = _dataset_from_config(raw)
    from dataclasses import replace

    cfg = replace(_search_config(raw, seed, jobs), compute_shape=True)
    weights = _vote_weights(raw)
    out = _resolve_outdir(output_dir)
    res = run_search(ds, cfg)
    best_subset, best_k = vote_from_records(res.records, weights)
    per_k = select_by_vote_per_k(res.records, weights)
    selected = {k: [rec] for k, rec in per_k.items()}
    hist = accumulate_histogram(
        list(per_k.values()), cfg.bin_width, float(ds.axis[0]), ds.axis_end
    )
    manifest = {
        "config": artifacts.config_to_dict(cfg),
        "config_hash": artifacts.config_hash(cfg),
        "seed": cfg.seed,
        "criterion": "shape",
        "voting": "stage1 weighted plurality over K, stage2 weighted Borda over subsets",
        "weights": {"w1": weights.w1, "w2": weights.w2},
        "best_subset": list(best_subset),
        "best_k": best_k,
        "attempted": res.attempted,
        "n_records": len(res.records),
        "n_skipped": len(res.skipped),
        "per_k_best": {str(k): rec.to_record() for k, rec in per_k.items()},
        "complete": res.complete,
    }
    artifacts.write_json(out / "vote.json", manifest)
    artifacts.write_histogram_csv(out / "histogram.csv", hist)
    artifacts.write_selected_csv(out / "selected_partitions.csv", ds, selected, cfg)
    click.echo(f"vote done: best subset {list(best_subset)} at K={best_k}")


@cli.command("eval")
@click.option("--onset-dir", required=True, type=click.Path())
@click.option("--shape-dir", default=None, type=click.Path())
@click.option("--output", default=None, type=click.Path())
def cmd_eval(onset_dir, shape_dir, output):
    """Per-K Rand summaries of selected partitions against ground truth."""
    summaries = {}
    labels = None
    for crit, run_dir in (("onset", onset_dir), ("shape", shape_dir)):
        if run_dir is None:
            continue
        csv_path = Path(run_dir) / "selected_partitions.csv"
        if not csv_path.exists():
            raise ConfigError(f"missing {csv_path}")
        truth, partitions = artifacts.read_selected_csv(csv_path)
        if truth is None:
            raise ConfigError(f"{csv_path} carries no ground-truth label column")
        labels = truth
        per_k: dict[int, list] = {}
        for name, assignments in partitions.items():
            k = int(name.split("_")[0][1:])
            per_k.setdefault(k, []).append(rand_index(assignments, truth))
        summaries[crit] = {
            k: summarize_rand(np.array(v)) for k, v in sorted(per_k.items())
        }
    out_path = Path(output) if output else Path(onset_dir) / "eval.csv"
    artifacts.write_eval_csv(out_path, summaries)
    for crit in sorted(summaries):
        for k, s in sorted(summaries[crit].items()):
            click.echo(
                f"{crit} K={k}: min={s['min']:.3f} max={s['max']:.3f} "
                f"median={s['median']:.3f} outliers={s['n_outliers']}"
            )
    click.echo(f"wrote {out_path}")


@cli.command("stream")
@click.option("--t-end", required=True, type=float)
@click.option("--input", "input_path", default="-", show_default=True,
              help="file of 't,cluster_id' lines, or - for stdin")
def cmd_stream(t_end, input_path):
    """Replay an event stream and emit a JSON event per new cluster onset."""
    tracker = OnsetTracker(t_end)
    fh = sys.stdin if input_path == "-" else open(input_path)
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                t_str, cid_str = line.split(",")
                t, cid = float(t_str), int(cid_str)
            except ValueError:
                raise StreamError(f"line {lineno}: expected 't,cluster_id'") from None
            if tracker.observe(cid, t):
                click.echo(
                    json.dumps(
                        {
                            "cluster_id": cid,
                            "t": t,
                            "k_so_far": tracker.k_so_far,
                            "quality": tracker.current_quality(),
                        },
                        sort_keys=True,
                    )
                )
    finally:
        if fh is not sys.stdin:
            fh.close()


@cli.command("report")
@click.option("--run-dir", required=True, type=click.Path())
@click.option("--truth", "truth_path", default=None, type=click.Path())
@click.option("--top", default=6, show_default=True)
@click.option("--min-count", default=0, show_default=True,
              help="hide bins below this count (display only)")
def cmd_report(run_dir, truth_path, top, min_count):
    """Summarize a run directory: counts, top histogram bins, change points."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        manifest_path = run_dir / "vote.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest in {run_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    click.echo(
        f"criterion={manifest['criterion']} seed={manifest['seed']} "
        f"hash={manifest['config_hash'][:12]} attempted={manifest['attempted']} "
        f"skipped={manifest['n_skipped']}"
    )
    rows = []
    with open(run_dir / "histogram.csv") as fh:
        next(fh)
        for line in fh:
            start, end, count = line.strip().split(",")
            rows.append((float(start), float(end), int(count)))
    ranked = sorted(rows, key=lambda r: (-r[2], r[0]))[:top]
    for start, end, count in ranked:
        if count >= min_count:
            click.echo(f"bin [{start:g}, {end:g}): {count}")
    if truth_path:
        truth = load_truth(truth_path)
        from .search import OnsetHistogram

        counts = np.array([r[2] for r in rows])
        edges = np.array([r[0] for r in rows] + [rows[-1][1]])
        hist = OnsetHistogram(
            bin_width=float(edges[1] - edges[0]),
            bin_edges=edges,
            counts=counts,
            contributing_partitions=-1,
        )
        _, covered = matched_top_bins(hist, truth["change_points"], top)
        any_cover = covered_change_points(hist, truth["change_points"])
        click.echo(
            f"change points near top-{top} bins: {sorted(covered)}; "
            f"with any onset: {sorted(any_cover)}"
        )


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except SearchFailedError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (ConfigError, DatasetError, StreamError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

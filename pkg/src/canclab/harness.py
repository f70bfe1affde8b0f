"""Experiment harness: data -> noise -> train -> evaluate -> reports.

A run writes three artifacts into its output directory:

  epochs.csv   one row per (epoch, split) with metrics and selection stats
  sp_iou.json  per-evaluation-scene smoothed IoU, [{"scene_id", "sp_iou"}]
  summary.json config echo, dataset counts, best snapshot, final metrics

All files are written atomically (temp file + rename) and contain nothing
volatile, so rerunning the same config overwrites them byte-for-byte.
Wall-clock time lives only on the in-memory report.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .config import DataConfig, ExperimentConfig, OutputConfig
from .data import (
    MaskDataset,
    SceneGenParams,
    build_mask_dataset,
    generate_scene,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .errors import ConfigError, DataError
from .metrics import confusion, prf1, scene_sp_iou
from .nn import NetworkSpec, parse_layers
from .noise import make_transition, inject
from .training import TrainResult, dataset_metrics, predict_dataset, train
from .version import __version__

__all__ = [
    "RunReport",
    "run_experiment",
    "prepare_data",
    "gen_data",
    "sweep",
    "parse_grid",
    "compare_runs",
    "load_report",
    "resolve_out_dir",
    "DEFAULT_GRID",
]

OUT_ENV_VAR = "CANCLAB_OUT"
DEFAULT_GRID = "algo=vanilla,coteaching,canc;noise=symmetric,antisymmetric;epsilon=0.15,0.35,0.45,0.55"

EPOCH_CSV_COLUMNS = (
    "epoch", "split", "accuracy", "precision", "recall", "f1",
    "remember_rate", "n_clean", "n_swapped", "swap_correct_fraction",
)


@dataclass(frozen=True, eq=False)
class RunReport:
    """Everything a finished run knows about itself; files already exist."""

    name: str
    out_dir: str
    config_echo: dict
    files: dict
    counts: dict
    best_epoch: int
    best_accuracy: float
    final_metrics: dict
    scene_ious: tuple
    wall_time: float
    version: str = __version__


def resolve_out_dir(configured: str, override: str = None) -> str:
    """Explicit override wins; otherwise the configured directory, rooted at
    $CANCLAB_OUT when it is relative and the env var is set."""
    path = override if override else configured
    if not os.path.isabs(path):
        root = os.environ.get(OUT_ENV_VAR, "")
        if root:
            path = os.path.join(root, path)
    return path


def _write_atomic(path: str, data) -> None:
    tmp = path + ".tmp"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _scene_params(d: DataConfig) -> SceneGenParams:
    return SceneGenParams(
        size=d.scene_size,
        channels=d.channels,
        building_count=d.building_count,
        building_side=d.building_side,
        building_intensity=d.building_intensity,
        background_intensity=d.background_intensity,
        pixel_noise=d.pixel_noise,
        seed=d.seed,
    )


def prepare_data(cfg: ExperimentConfig):
    """Steps 1-2 of the pipeline: build/read the mask dataset, split it, and
    inject label noise into the training partition (and optionally the
    model-selection partition). Evaluation labels stay clean."""
    d = cfg.data
    if d.source == "synthetic":
        params = _scene_params(d)
        scenes = [generate_scene(params, scene_id=i) for i in range(d.n_scenes)]
        ds = build_mask_dataset(scenes, d.m, d.tau_label)
    else:
        ds = read_dataset(d.path, tau_label=d.tau_label)
    train_ds, modelsel_ds, eval_ds = split_dataset(ds, d.split, seed=d.seed)

    if cfg.noise.kind != "none":
        t = make_transition(cfg.noise.kind, cfg.noise.epsilon)
        train_ds = inject(train_ds, t, np.random.SeedSequence((cfg.noise.seed, 0)))
        if cfg.noise.noise_modelsel:
            modelsel_ds = inject(modelsel_ds, t, np.random.SeedSequence((cfg.noise.seed, 1)))
    return train_ds, modelsel_ds, eval_ds


def _net_spec(cfg: ExperimentConfig) -> NetworkSpec:
    return NetworkSpec(
        input_size=cfg.data.m,
        channels=cfg.data.channels,
        layers=parse_layers(cfg.network),
    )


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = {
        "data": asdict(cfg.data),
        "noise": asdict(cfg.noise),
        "train": asdict(cfg.train),
        "output": asdict(cfg.output),
        "train_seed": cfg.train_seed,
        "network": cfg.network,
    }
    echo["noise"]["type"] = echo["noise"].pop("kind")
    return echo


def _metrics_dict(m) -> dict:
    return {"accuracy": m.accuracy, "precision": m.precision, "recall": m.recall, "f1": m.f1}


def _epochs_csv(result: TrainResult) -> str:
    lines = [",".join(EPOCH_CSV_COLUMNS)]
    for rec in result.records:
        for split, m in (("train", rec.train_metrics), ("modelsel", rec.modelsel_metrics)):
            lines.append(
                ",".join(
                    [
                        str(rec.epoch),
                        split,
                        str(m.accuracy),
                        str(m.precision),
                        str(m.recall),
                        str(m.f1),
                        str(rec.remember_rate),
                        str(rec.n_clean),
                        str(rec.n_swapped),
                        str(rec.swap_correct_fraction),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir: str = None, name: str = None) -> RunReport:
    """Execute the full pipeline for one config and write its reports."""
    started = time.monotonic()
    out = resolve_out_dir(cfg.output.dir, out_dir)
    os.makedirs(out, exist_ok=True)

    train_ds, modelsel_ds, eval_ds = prepare_data(cfg)
    result = train(train_ds, modelsel_ds, _net_spec(cfg), cfg.train)

    final = {
        "train": _metrics_dict(dataset_metrics(result.best_network, train_ds)),
        "modelsel": _metrics_dict(dataset_metrics(result.best_network, modelsel_ds)),
        "eval": _metrics_dict(dataset_metrics(result.best_network, eval_ds)),
    }
    eval_pred = predict_dataset(result.best_network, eval_ds.patches)
    ious = scene_sp_iou(eval_ds.scene_ids, eval_ds.labels, eval_pred)
    final["eval"]["sp_iou_mean"] = (
        float(np.mean([x["sp_iou"] for x in ious])) if ious else math.nan
    )

    counts = {
        "train_masks": len(train_ds),
        "modelsel_masks": len(modelsel_ds),
        "eval_masks": len(eval_ds),
        "eval_scenes": int(np.unique(eval_ds.scene_ids).size),
        "pool_scenes": int(np.unique(np.concatenate([train_ds.scene_ids, modelsel_ds.scene_ids])).size),
    }
    if train_ds.clean_labels is not None:
        counts["train_flipped_fraction"] = float(np.mean(train_ds.labels != train_ds.clean_labels))

    files = {}
    if "csv" in cfg.output.formats:
        files["epochs_csv"] = "epochs.csv"
        _write_atomic(os.path.join(out, "epochs.csv"), _epochs_csv(result))
    if "json" in cfg.output.formats:
        files["sp_iou_json"] = "sp_iou.json"
        _write_atomic(os.path.join(out, "sp_iou.json"), _json_dumps(ious))

    summary = {
        "version": __version__,
        # name comes from the config, never the resolved path, so reruns
        # into a different directory still produce identical bytes
        "name": name or os.path.basename(os.path.normpath(cfg.output.dir)),
        "config": _config_echo(cfg),
        "counts": counts,
        "best": {"epoch": result.best_epoch, "modelsel_accuracy": result.best_accuracy},
        "final_metrics": final,
        "files": files,
    }
    if "json" in cfg.output.formats:
        files["summary_json"] = "summary.json"
        _write_atomic(os.path.join(out, "summary.json"), _json_dumps(summary))

    return RunReport(
        name=summary["name"],
        out_dir=out,
        config_echo=summary["config"],
        files=files,
        counts=counts,
        best_epoch=result.best_epoch,
        best_accuracy=result.best_accuracy,
        final_metrics=final,
        scene_ious=tuple(ious),
        wall_time=time.monotonic() - started,
    )


def gen_data(cfg: ExperimentConfig, out_dir: str = None) -> dict:
    """Materialize the dataset to binary files: full.bin holds every mask
    with clean labels; train/modelsel/eval.bin hold the split partitions,
    train.bin with noise baked in when noise is configured."""
    out = resolve_out_dir(cfg.output.dir, out_dir)
    os.makedirs(out, exist_ok=True)
    d = cfg.data
    if d.source != "synthetic":
        raise ConfigError("gen-data needs [data] source = synthetic")
    params = _scene_params(d)
    scenes = [generate_scene(params, scene_id=i) for i in range(d.n_scenes)]
    ds = build_mask_dataset(scenes, d.m, d.tau_label)
    train_ds, modelsel_ds, eval_ds = split_dataset(ds, d.split, seed=d.seed)
    if cfg.noise.kind != "none":
        t = make_transition(cfg.noise.kind, cfg.noise.epsilon)
        train_ds = inject(train_ds, t, np.random.SeedSequence((cfg.noise.seed, 0)))
        if cfg.noise.noise_modelsel:
            modelsel_ds = inject(modelsel_ds, t, np.random.SeedSequence((cfg.noise.seed, 1)))

    manifest = {"version": __version__, "m": d.m, "channels": d.channels, "files": {}}
    for fname, part in (
        ("full.bin", ds),
        ("train.bin", train_ds),
        ("modelsel.bin", modelsel_ds),
        ("eval.bin", eval_ds),
    ):
        path = os.path.join(out, fname)
        tmp = path + ".tmp"
        write_dataset(tmp, part)
        os.replace(tmp, path)
        manifest["files"][fname] = {
            "masks": len(part),
            "labels_noisy": part.clean_labels is not None,
        }
    _write_atomic(os.path.join(out, "manifest.json"), _json_dumps(manifest))
    return manifest


def parse_grid(text: str) -> dict:
    """Parse 'algo=a,b;noise=c;epsilon=0.1,0.2' into an ordered dict of
    value lists. Allowed axes: algo, noise, epsilon."""
    grid = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"grid term {part!r} is not key=v1,v2,...")
        key, values = part.split("=", 1)
        key = key.strip()
        if key not in ("algo", "noise", "epsilon"):
            raise ConfigError(f"unknown grid axis {key!r}")
        items = [v.strip() for v in values.split(",") if v.strip()]
        if not items:
            raise ConfigError(f"grid axis {key!r} has no values")
        grid[key] = [float(v) for v in items] if key == "epsilon" else items
    if not grid:
        raise ConfigError("empty sweep grid")
    return grid


def sweep(cfg: ExperimentConfig, grid_text: str = DEFAULT_GRID, out_dir: str = None) -> dict:
    """Run one experiment per grid cell under a common output root and
    write a sweep_summary table (CSV and JSON)."""
    grid = parse_grid(grid_text)
    root = resolve_out_dir(cfg.output.dir, out_dir)
    os.makedirs(root, exist_ok=True)

    axes = [("algo", grid.get("algo", [cfg.train.algo])),
            ("noise", grid.get("noise", [cfg.noise.kind])),
            ("epsilon", grid.get("epsilon", [cfg.noise.epsilon]))]
    rows = []
    for algo, kind, eps in itertools.product(*(v for _, v in axes)):
        cell = f"{algo}_{kind}_eps{eps:g}"
        cell_cfg = replace(
            cfg,
            train=replace(cfg.train, algo=algo),
            noise=replace(cfg.noise, kind=kind, epsilon=eps),
            output=replace(cfg.output, dir=os.path.join(root, cell)),
        )
        report = run_experiment(cell_cfg, name=cell)
        rows.append(
            {
                "cell": cell,
                "algo": algo,
                "noise": kind,
                "epsilon": eps,
                "best_modelsel_accuracy": report.best_accuracy,
                "eval_accuracy": report.final_metrics["eval"]["accuracy"],
                "eval_f1": report.final_metrics["eval"]["f1"],
                "eval_sp_iou_mean": report.final_metrics["eval"]["sp_iou_mean"],
            }
        )

    header = ["cell", "algo", "noise", "epsilon", "best_modelsel_accuracy",
              "eval_accuracy", "eval_f1", "eval_sp_iou_mean"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row[k]) for k in header))
    _write_atomic(os.path.join(root, "sweep_summary.csv"), "\n".join(lines) + "\n")
    summary = {"version": __version__, "grid": grid_text, "rows": rows}
    _write_atomic(os.path.join(root, "sweep_summary.json"), _json_dumps(summary))
    return summary


def load_report(run_dir: str) -> RunReport:
    """Rehydrate a report from a run directory's summary and SP-IoU files."""
    spath = os.path.join(run_dir, "summary.json")
    ipath = os.path.join(run_dir, "sp_iou.json")
    for path in (spath, ipath):
        if not os.path.isfile(path):
            raise DataError(f"missing report file: {path}")
    with open(spath) as fh:
        summary = json.load(fh)
    with open(ipath) as fh:
        ious = json.load(fh)
    return RunReport(
        name=summary.get("name", os.path.basename(os.path.normpath(run_dir))),
        out_dir=run_dir,
        config_echo=summary["config"],
        files=summary["files"],
        counts=summary["counts"],
        best_epoch=summary["best"]["epoch"],
        best_accuracy=summary["best"]["modelsel_accuracy"],
        final_metrics=summary["final_metrics"],
        scene_ious=tuple(ious),
        wall_time=math.nan,
        version=summary.get("version", "unknown"),
    )


def compare_runs(reports) -> dict:
    """Align per-scene SP-IoU across runs (same evaluation scenes required)
    and flag the scenes the last run improved most/least over the first."""
    reports = list(reports)
    if not reports:
        raise DataError("nothing to compare")
    names = []
    for rep in reports:
        candidate, k = rep.name, 2
        while candidate in names:
            candidate = f"{rep.name}#{k}"
            k += 1
        names.append(candidate)
    base_ids = [x["scene_id"] for x in reports[0].scene_ious]
    for rep in reports[1:]:
        ids = [x["scene_id"] for x in rep.scene_ious]
        if ids != base_ids:
            raise DataError(
                f"run {rep.name!r} evaluates scenes {ids}, expected {base_ids}"
            )

    per_scene = []
    for i, sid in enumerate(base_ids):
        base = reports[0].scene_ious[i]["sp_iou"]
        row = {"scene_id": sid, "sp_iou": {}, "ratio_vs_first": {}}
        for rep, rname in zip(reports, names):
            v = rep.scene_ious[i]["sp_iou"]
            row["sp_iou"][rname] = v
            row["ratio_vs_first"][rname] = v / base
        per_scene.append(row)

    result = {
        "runs": [
            {
                "name": rname,
                "algo": rep.config_echo["train"]["algo"],
                "noise": rep.config_echo["noise"]["type"],
                "epsilon": rep.config_echo["noise"]["epsilon"],
                "best_modelsel_accuracy": rep.best_accuracy,
                "final_metrics": rep.final_metrics,
            }
            for rep, rname in zip(reports, names)
        ],
        "per_scene": per_scene,
    }
    last = names[-1]
    if per_scene:
        ranked = sorted(per_scene, key=lambda row: row["ratio_vs_first"][last])
        result["worst_improved_scene"] = {
            "scene_id": ranked[0]["scene_id"], "ratio": ranked[0]["ratio_vs_first"][last]
        }
        result["best_improved_scene"] = {
            "scene_id": ranked[-1]["scene_id"], "ratio": ranked[-1]["ratio_vs_first"][last]
        }
    return result

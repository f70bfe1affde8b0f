"""Harness tests: config parsing, the four-step pipeline, reports, sweep,
compare, data generation, and the CLI surface."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from canclab import (
    ConfigError,
    DataError,
    compare_runs,
    gen_data,
    load_config,
    load_report,
    read_dataset,
    run_experiment,
    sweep,
)
from canclab.config import derive_train_seeds, parse_config_text
from canclab.harness import parse_grid, resolve_out_dir

TINY = """
[data]
n_scenes = 6
scene_size = 128
m = 16
split = 0.6,0.2,0.2
seed = 0

[noise]
type = symmetric
epsilon = 0.35
seed = 1

[train]
algo = canc
lr = 0.05
t_max = 3
t_k = 2
batch_size = 32
tau_f = 0.45
swap_rate = 0.1
seed = 7
network = conv(4,5,2) lrelu(0.1) conv(8,3,1) lrelu(0.1) dense(128,2)

[output]
dir = tinyrun
"""


def tiny_cfg():
    return parse_config_text(TINY)


# ---------------------------------------------------------------------------
# config parsing


def test_config_defaults():
    cfg = parse_config_text("")
    assert cfg.data.n_scenes == 20
    assert cfg.data.scene_size == 512
    assert cfg.data.m == 32
    assert cfg.noise.kind == "none"
    assert cfg.train.algo == "canc"
    assert cfg.output.formats == ("csv", "json")


def test_config_unknown_section_and_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[wat]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("[data]\nscenes = 5\n")


def test_config_type_errors_are_config_errors():
    with pytest.raises(ConfigError):
        parse_config_text("[data]\nn_scenes = many\n")
    with pytest.raises(ConfigError):
        parse_config_text("[noise]\nnoise_modelsel = maybe\n")
    with pytest.raises(ConfigError):
        parse_config_text("[data]\nsplit = 0.5,0.5\n")


def test_config_inline_comments():
    cfg = parse_config_text("[data]\nn_scenes = 4  # small\n")
    assert cfg.data.n_scenes == 4


def test_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/whatever.ini")


def test_config_file_source_requires_existing_path(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("[data]\nsource = file\npath = gone.bin\n", base_dir=str(tmp_path))


def test_derive_train_seeds_deterministic():
    assert derive_train_seeds(7) == derive_train_seeds(7)
    assert derive_train_seeds(7) != derive_train_seeds(8)
    cfg1 = parse_config_text("[train]\nseed = 7\n")
    cfg2 = parse_config_text("[train]\nseed = 7\n")
    assert cfg1.train.shuffle_seed == cfg2.train.shuffle_seed
    assert len({cfg1.train.shuffle_seed, cfg1.train.init_seed_1, cfg1.train.init_seed_2}) == 3


def test_ablation_flag_maps_to_swap_mode():
    cfg = parse_config_text("[train]\nablation_s_equals_1_minus_r = true\n")
    assert cfg.train.swap_mode == "one_minus_r"


def test_resolve_out_dir_env_root(monkeypatch, tmp_path):
    monkeypatch.setenv("CANCLAB_OUT", str(tmp_path))
    assert resolve_out_dir("x") == os.path.join(str(tmp_path), "x")
    assert resolve_out_dir("/abs/x") == "/abs/x"
    monkeypatch.delenv("CANCLAB_OUT")
    assert resolve_out_dir("x") == "x"


# ---------------------------------------------------------------------------
# run_experiment


def test_run_writes_reports_and_is_deterministic(tmp_path):
    cfg = tiny_cfg()
    r1 = run_experiment(cfg, out_dir=str(tmp_path / "a"))
    r2 = run_experiment(cfg, out_dir=str(tmp_path / "b"))
    for fname in ("epochs.csv", "sp_iou.json", "summary.json"):
        b1 = (tmp_path / "a" / fname).read_bytes()
        b2 = (tmp_path / "b" / fname).read_bytes()
        assert b1 == b2, fname
    assert r1.best_accuracy == r2.best_accuracy
    assert r1.wall_time >= 0.0


def test_run_epochs_csv_schema(tmp_path):
    run_experiment(tiny_cfg(), out_dir=str(tmp_path))
    lines = (tmp_path / "epochs.csv").read_text().strip().split("\n")
    header = lines[0].split(",")
    assert header == [
        "epoch", "split", "accuracy", "precision", "recall", "f1",
        "remember_rate", "n_clean", "n_swapped", "swap_correct_fraction",
    ]
    assert len(lines) == 1 + 2 * 3  # header + (train, modelsel) x epochs
    assert lines[1].split(",")[1] == "train"
    assert lines[2].split(",")[1] == "modelsel"


def test_run_summary_contents(tmp_path):
    run_experiment(tiny_cfg(), out_dir=str(tmp_path))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["noise"]["epsilon"] == 0.35
    assert summary["config"]["train"]["algo"] == "canc"
    assert summary["counts"]["train_masks"] > 0
    assert summary["counts"]["eval_scenes"] == 1
    assert 0.0 <= summary["best"]["modelsel_accuracy"] <= 1.0
    assert set(summary["final_metrics"]) == {"train", "modelsel", "eval"}
    ious = json.loads((tmp_path / "sp_iou.json").read_text())
    assert len(ious) == summary["counts"]["eval_scenes"]
    assert set(ious[0]) == {"scene_id", "sp_iou"}


def test_run_clean_vanilla_beats_coin_flip(tmp_path):
    text = TINY.replace("type = symmetric", "type = none").replace("algo = canc", "algo = vanilla")
    cfg = parse_config_text(text)
    report = run_experiment(cfg, out_dir=str(tmp_path))
    assert report.final_metrics["eval"]["accuracy"] > 0.5


def test_run_respects_formats(tmp_path):
    cfg = parse_config_text(TINY + "formats = csv\n")
    run_experiment(cfg, out_dir=str(tmp_path))
    assert (tmp_path / "epochs.csv").exists()
    assert not (tmp_path / "summary.json").exists()


# ---------------------------------------------------------------------------
# compare


def test_compare_single_report_is_identity(tmp_path):
    run_experiment(tiny_cfg(), out_dir=str(tmp_path / "a"))
    rep = load_report(str(tmp_path / "a"))
    result = compare_runs([rep])
    assert result["runs"][0]["best_modelsel_accuracy"] == rep.best_accuracy
    assert all(
        row["ratio_vs_first"][rep.name] == 1.0 for row in result["per_scene"]
    )


def test_compare_identical_reports_ratio_one(tmp_path):
    run_experiment(tiny_cfg(), out_dir=str(tmp_path / "a"))
    run_experiment(tiny_cfg(), out_dir=str(tmp_path / "b"))
    reports = [load_report(str(tmp_path / "a")), load_report(str(tmp_path / "b"))]
    result = compare_runs(reports)
    names = [r["name"] for r in result["runs"]]
    assert len(set(names)) == 2  # deduplicated display names
    for row in result["per_scene"]:
        assert all(v == 1.0 for v in row["ratio_vs_first"].values())
    assert result["best_improved_scene"]["ratio"] == 1.0


def test_compare_rejects_mismatched_eval_scenes(tmp_path):
    run_experiment(tiny_cfg(), out_dir=str(tmp_path / "a"))
    other = parse_config_text(TINY.replace("seed = 0", "seed = 5"))
    run_experiment(other, out_dir=str(tmp_path / "b"))
    reports = [load_report(str(tmp_path / "a")), load_report(str(tmp_path / "b"))]
    with pytest.raises(DataError):
        compare_runs(reports)


def test_load_report_missing_files(tmp_path):
    with pytest.raises(DataError):
        load_report(str(tmp_path))


# ---------------------------------------------------------------------------
# sweep


def test_parse_grid():
    grid = parse_grid("algo=vanilla,canc;epsilon=0.1,0.2")
    assert grid == {"algo": ["vanilla", "canc"], "epsilon": [0.1, 0.2]}
    with pytest.raises(ConfigError):
        parse_grid("nonsense")
    with pytest.raises(ConfigError):
        parse_grid("colors=red,blue")


def test_sweep_produces_all_cells(tmp_path):
    summary = sweep(
        tiny_cfg(),
        grid_text="algo=vanilla,canc;noise=symmetric;epsilon=0.2",
        out_dir=str(tmp_path),
    )
    cells = [row["cell"] for row in summary["rows"]]
    assert cells == ["vanilla_symmetric_eps0.2", "canc_symmetric_eps0.2"]
    for cell in cells:
        assert (tmp_path / cell / "summary.json").exists()
    table = (tmp_path / "sweep_summary.csv").read_text().strip().split("\n")
    assert len(table) == 3
    assert json.loads((tmp_path / "sweep_summary.json").read_text())["rows"]


# ---------------------------------------------------------------------------
# gen-data


def test_gen_data_roundtrip(tmp_path):
    manifest = gen_data(tiny_cfg(), out_dir=str(tmp_path))
    assert set(manifest["files"]) == {"full.bin", "train.bin", "modelsel.bin", "eval.bin"}
    train = read_dataset(str(tmp_path / "train.bin"))
    assert train.clean_labels is not None  # noise baked in with originals kept
    assert manifest["files"]["train.bin"]["masks"] == len(train)
    full = read_dataset(str(tmp_path / "full.bin"))
    assert full.clean_labels is None
    assert len(full) == 6 * (128 // 16) ** 2
    assert json.loads((tmp_path / "manifest.json").read_text())["m"] == 16


# ---------------------------------------------------------------------------
# CLI


def run_cli(args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "canclab", *args], capture_output=True, text=True, env=env
    )


def test_cli_run_and_exit_codes(tmp_path):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(TINY)
    out = tmp_path / "out"
    proc = run_cli(["run", str(cfg_path), "--out", str(out)])
    assert proc.returncode == 0, proc.stderr
    assert "best modelsel accuracy" in proc.stdout
    assert (out / "summary.json").exists()


def test_cli_env_var_roots_relative_output(tmp_path):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(TINY)
    proc = run_cli(["run", str(cfg_path)], env_extra={"CANCLAB_OUT": str(tmp_path)})
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "tinyrun" / "summary.json").exists()


def test_cli_config_error_exit_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nalgo = sorcery\n")
    proc = run_cli(["run", str(bad)])
    assert proc.returncode == 2
    assert "configuration error" in proc.stderr


def test_cli_data_error_exit_3(tmp_path):
    corrupt = tmp_path / "corrupt.bin"
    corrupt.write_bytes(b"JUNKJUNKJUNKJUNKJUNK")
    cfg = tmp_path / "exp.ini"
    cfg.write_text(
        f"[data]\nsource = file\npath = {corrupt}\nm = 16\nsplit = 0.6,0.2,0.2\n"
    )
    proc = run_cli(["run", str(cfg), "--out", str(tmp_path / "o")])
    assert proc.returncode == 3
    assert "data error" in proc.stderr


def test_cli_numeric_error_exit_4(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(TINY.replace("lr = 0.05", "lr = 1e18"))
    proc = run_cli(["run", str(cfg), "--out", str(tmp_path / "o")])
    assert proc.returncode == 4
    assert "numeric error" in proc.stderr


def test_cli_compare_and_gen_data(tmp_path):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(TINY)
    assert run_cli(["run", str(cfg_path), "--out", str(tmp_path / "a")]).returncode == 0
    assert run_cli(["run", str(cfg_path), "--out", str(tmp_path / "b")]).returncode == 0
    proc = run_cli(["compare", str(tmp_path / "a"), str(tmp_path / "b")])
    assert proc.returncode == 0, proc.stderr
    assert "best improved scene" in proc.stdout
    proc = run_cli(["compare", str(tmp_path / "a"), "--json"])
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["per_scene"]
    proc = run_cli(["gen-data", str(cfg_path), "--out", str(tmp_path / "d")])
    assert proc.returncode == 0
    assert (tmp_path / "d" / "train.bin").exists()


def test_cli_sweep(tmp_path):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(TINY)
    proc = run_cli(
        ["sweep", str(cfg_path), "--grid", "algo=vanilla;noise=antisymmetric;epsilon=0.3",
         "--out", str(tmp_path / "s")]
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "s" / "sweep_summary.csv").exists()

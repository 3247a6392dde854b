import json

import numpy as np
import pytest

from vpctl.cli import EXIT_BLOWUP, EXIT_CONFIG, main
from vpctl.diagnostics import checkpoint_read, read_series_csv
from vpctl.experiments import ConfigError, load_config, resolve_config, run_experiment
from vpctl.presets import DESK, PRESETS, list_presets, preset_config

STUDIES = {"two-stream control study", "cancellation universality study", "noisy feedback study",
           "bump-on-tail control study", "2D cancellation study"}


def test_list_presets_text(capsys):
    assert main(["list-presets"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 12
    for name in PRESETS:
        line = next(l for l in lines if l.split()[0] == name)
        assert any(s in line for s in STUDIES)


def test_list_presets_json(capsys):
    assert main(["list-presets", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows == list_presets()
    assert {r["name"] for r in rows} == set(PRESETS)


def test_presets_resolve_at_both_scales():
    for name in PRESETS:
        for scale in ("desk", "paper"):
            cfg = resolve_config({"experiment": {"preset": name}}, scale=scale)
            assert cfg.name == name and cfg.scale == scale
    full = resolve_config({"experiment": {"preset": "two_stream_feedback"}}, scale="paper")
    assert (full.grid.nx, full.grid.nv, full.training["iterations"]) == (100, 200, 3000)
    twod = resolve_config({"experiment": {"preset": "two_stream_2d_cancellation"}}, scale="paper")
    assert (twod.grid.nx, twod.grid.nv, twod.solver.dt, twod.controller["gamma"]) == (70, 120, 0.15, 2.0)


def test_noise_sweep_sigma_grids():
    assert preset_config("two_stream_noise_sweep")["noise"]["sigma"] == [2e-5, 5e-5, 1e-4]
    assert preset_config("bump_on_tail_noise_sweep")["noise"]["sigma"] == [2.4e-5, 6e-5, 1.2e-4]
    assert DESK["two_stream_uncontrolled"] == {}


@pytest.mark.parametrize("raw, path", [
    ({"grid": {"nx": 10}, "equilibrium": {"kind": "two_stream_1d"}, "bogus": {}}, "bogus"),
    ({"experiment": {"preset": "two_stream_uncontrolled"}, "solver": {"dtt": 0.1}}, "solver.dtt"),
    ({"experiment": {"preset": "two_stream_uncontrolled"}, "grid": {"nx": "64"}}, "grid.nx"),
    ({"experiment": {"preset": "nope"}}, "experiment.preset"),
    ({"experiment": {"preset": "two_stream_uncontrolled"}, "grid": {"nx": 2}}, "grid"),
    ({"experiment": {"preset": "two_stream_uncontrolled"}, "controller": {"kind": "pid"}},
     "controller.kind"),
    ({"equilibrium": {"kind": "two_stream_1d"}, "controller": {"kind": "low_rank_operator"}},
     "training"),
    ({"equilibrium": {"kind": "two_stream_1d"}, "initial": {"preset": "bump_on_tail_default"}},
     "initial.preset"),
    ({"experiment": {"preset": "two_stream_uncontrolled", "snapshot_times": [80.0]}},
     "experiment.snapshot_times[0]"),
    ({"experiment": {"preset": "two_stream_2d_uncontrolled"}, "solver": {"bc": "dirichlet"}},
     "solver.bc"),
    ({"experiment": {"preset": "two_stream_noise_sweep"}, "noise": {"sigma": [-1.0]}},
     "noise.sigma[0]"),
    ({}, "equilibrium.kind"),
])
def test_config_errors_name_field_paths(raw, path):
    with pytest.raises(ConfigError) as info:
        resolve_config(raw)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_cli_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[experiment]\npreset = "two_stream_uncontrolled"\n[training]\niteratons = 3\n')
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert "training.iteratons" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_cli_requires_one_source(tmp_path):
    with pytest.raises(SystemExit):
        main(["run"])
    with pytest.raises(SystemExit):
        main(["run", "x.toml", "--preset", "two_stream_uncontrolled"])


def test_cli_blowup_exit(tmp_path, capsys):
    cfg = tmp_path / "blow.toml"
    cfg.write_text(f'[experiment]\nout = "{tmp_path / "out"}"\n[grid]\nnx = 16\nnv = 24\n'
                   '[equilibrium]\nkind = "two_stream_1d"\n'
                   '[solver]\nt_end = 1.0\nblowup_threshold = 1e-3\n')
    assert main(["run", str(cfg)]) == EXIT_BLOWUP
    assert "blowup" in capsys.readouterr().err
    assert len(read_series_csv(tmp_path / "out" / "series.csv")) == 1


def test_load_config_formats(tmp_path):
    (tmp_path / "a.json").write_text('{"grid": {"nx": 8}}')
    assert load_config(tmp_path / "a.json") == {"grid": {"nx": 8}}
    (tmp_path / "b.toml").write_text("[grid\n")
    with pytest.raises(ConfigError, match="TOML"):
        load_config(tmp_path / "b.toml")


def test_uncontrolled_preset_grows(tmp_path, capsys):
    out = tmp_path / "ts"
    assert main(["run", "--preset", "two_stream_uncontrolled", "--out", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("two_stream_uncontrolled: final l2_perturbation") and "wall time" in line
    l2 = read_series_csv(out / "series.csv").column("l2_perturbation")
    assert l2[-1] / l2[0] > 1e2
    for t in ("0", "35", "70"):
        assert (out / f"f_t{t}.csv").exists() and (out / f"f_t{t}.pgm").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_l2"] == l2[-1]


def test_cancellation_preset_decays(tmp_path):
    out = tmp_path / "canc"
    assert main(["run", "--preset", "two_stream_cancellation", "--out", str(out)]) == 0
    l2 = read_series_csv(out / "series.csv").column("l2_perturbation")
    assert np.all(l2[1:] <= l2[:-1] * (1 + 1e-3)) and l2[-1] < l2[0]
    zero = read_series_csv(out / "series_zero.csv").column("l2_perturbation")
    assert zero[-1] > 1e2 * zero[0]


def _small_training_config(tmp_path, seed=3):
    return {
        "experiment": {"name": "small", "seed": seed, "out": str(tmp_path), "compare": ["zero"],
                       "snapshot_times": [0.0, 2.0]},
        "grid": {"nx": 16, "nv": 24},
        "initial": {"preset": "two_stream_default"},
        "controller": {"kind": "low_rank_operator"},
        "solver": {"t_end": 4.0},
        "training": {"horizon": 2.0, "iterations": 3, "adagrad_steps": 1, "eval_every": 2},
        "noise": {"sigma": [1e-5, 1e-4], "controllers": ["low_rank_operator", "cancellation"],
                  "replicas": 2},
    }


def test_training_sweep_artifacts(tmp_path, monkeypatch):
    monkeypatch.setenv("VPCTL_THREADS", "2")
    summary = run_experiment(_small_training_config(tmp_path))
    for name in ("series.csv", "series_zero.csv", "train_record.csv", "checkpoint.bin",
                 "summary.json", "f_t0.csv", "f_t2.csv"):
        assert (tmp_path / name).exists(), name
    for sigma in ("1e-05", "0.0001"):
        for kind in ("low_rank_operator", "cancellation"):
            for r in (0, 1):
                assert (tmp_path / f"sigma_{sigma}" / f"series_{kind}_r{r}.csv").exists()
    assert len(summary["noise"]) == 8
    assert len({row["seed"] for row in summary["noise"]}) == 8
    params = checkpoint_read(tmp_path / "checkpoint.bin", "low_rank_operator")
    assert params.layer_dims == (2, 64, 32, 31)


def test_checkpoint_reload_reproduces_run(tmp_path):
    run_experiment(_small_training_config(tmp_path / "a"))
    raw = _small_training_config(tmp_path / "b")
    del raw["training"], raw["noise"]
    raw["controller"]["checkpoint"] = str(tmp_path / "a" / "checkpoint.bin")
    run_experiment(raw)
    assert (tmp_path / "a" / "series.csv").read_bytes() == (tmp_path / "b" / "series.csv").read_bytes()


def test_checkpoint_kind_mismatch_is_config_error(tmp_path):
    run_experiment(_small_training_config(tmp_path / "a"))
    raw = _small_training_config(tmp_path / "b")
    del raw["training"], raw["noise"]
    raw["experiment"]["compare"] = []
    raw["controller"] = {"kind": "time_independent", "checkpoint": str(tmp_path / "a" / "checkpoint.bin")}
    with pytest.raises(ConfigError, match="shape mismatch"):
        run_experiment(raw)


def test_same_seed_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("VPCTL_THREADS", "3")
    for d in ("a", "b"):
        run_experiment(_small_training_config(tmp_path / d))
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert len(files) > 10
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_thread_count_validation(monkeypatch):
    from vpctl.experiments import thread_count

    monkeypatch.setenv("VPCTL_THREADS", "four")
    with pytest.raises(ConfigError, match="VPCTL_THREADS"):
        thread_count()
    monkeypatch.setenv("VPCTL_THREADS", "0")
    assert thread_count() == 1


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "vpctl", "list-presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "two_stream_2d_cancellation" in res.stdout

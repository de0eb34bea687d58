import filecmp
from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exfl import pipeline as pl
from exfl.cli import main
from exfl.errors import ConfigError, StageFailure

TINY = """
# short traces and a token sweep so the whole flow runs in seconds
t_end=2.0
h_range=1..2
restarts=1
train.max_epochs=5
time_reps=10
"""


@pytest.fixture(scope="module")
def tiny_cfg():
    return pl.parse_config(TINY)


@pytest.fixture(scope="module")
def tiny_run(tiny_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    report = pl.run_pipeline(tiny_cfg, out)
    return out, report


# --- configuration ----------------------------------------------------------

def test_defaults_follow_the_study_settings():
    cfg = pl.PipelineConfig()
    assert (cfg.stats_sample_n, cfg.alpha, cfg.vif_cap) == (50, 0.05, 10.0)
    assert (cfg.h_min, cfg.h_max, cfg.restarts) == (1, 30, 30)
    assert len(cfg.scenarios) == 6
    desk = pl.PipelineConfig.desk()
    assert (desk.h_max, desk.restarts) == (15, 5)


def test_parse_config_keys_and_comments():
    text = """
    seed=7   # trailing comment
    machine.H=4.0
    network.line_impedances=0.25j,0.35j
    network.local_load=0.1+0.05j
    train.patience=3
    exclude_flagged=false
    mlp_models=MODEL_3,MODEL_8
    scenario.0.id=STEP
    scenario.0.events=VREF_STEP,0.5,0,0.05
    scenario.1.id=RECLOSE
    scenario.1.events=LINE_RECLOSE,1.0
    scenario.1.circuits=1
    """
    cfg = pl.parse_config(text)
    assert cfg.seed == 7 and cfg.machine.H == 4.0
    assert cfg.network.line_impedances == (0.25j, 0.35j)
    assert cfg.network.local_load == 0.1 + 0.05j
    assert cfg.train.patience == 3 and cfg.exclude_flagged is False
    assert cfg.mlp_models == ("MODEL_3", "MODEL_8")
    assert [s.scenario_id for s in cfg.scenarios] == ["STEP", "RECLOSE"]
    assert cfg.scenarios[0].events[0].magnitude == 0.05
    assert cfg.scenarios[1].circuits == 1


@pytest.mark.parametrize("text", ["bogus=1", "machine.Q=1", "seed", "seed=abc", "scenario.0.id=x", "h_range=4..2"])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        pl.parse_config(text)


def test_rendered_config_parses_back_to_itself():
    cfg = replace(pl.PipelineConfig.desk(seed=3), network=replace(pl.PipelineConfig().network, local_load=0.1 + 0.2j))
    assert pl.parse_config(pl.render_config(cfg)) == cfg


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(10, 200), restarts=st.integers(1, 30))
def test_config_round_trip_property(seed, n, restarts):
    cfg = pl.PipelineConfig(seed=seed, stats_sample_n=n, restarts=restarts)
    back = pl.parse_config(pl.render_config(cfg))
    assert back == cfg
    assert pl.config_hash(back) == pl.config_hash(cfg)


def test_config_hash_behaviour():
    a = pl.PipelineConfig()
    assert len(pl.config_hash(a)) == 64
    assert pl.config_hash(a) == pl.config_hash(replace(a, out="elsewhere", workers=4))
    assert pl.config_hash(a) != pl.config_hash(replace(a, seed=1))


def test_parse_range():
    assert pl.parse_range("1..30") == (1, 30)
    with pytest.raises(ConfigError, match="empty range"):
        pl.parse_range("5..3")
    with pytest.raises(ConfigError):
        pl.parse_range("7")


# --- pipeline ---------------------------------------------------------------

def test_pipeline_outputs(tiny_run, tiny_cfg):
    out, report = tiny_run
    assert len(report.regression_models()) == 8
    assert report.swept_models() == ["MODEL_7", "MODEL_8"]
    assert report.provenance["pool_rows"] == 6 * 400
    assert report.provenance["sample_rows"] == 50
    chash = pl.config_hash(tiny_cfg)
    csvs = sorted(out.rglob("*.csv"))
    assert len(csvs) >= 6 + 2 + 2 + 16 + 2 + 2
    for p in csvs:
        assert p.read_text().splitlines()[0] == f"# config={chash}"
    text = (out / "report.txt").read_text()
    assert "MODEL_8" in text and "Forward selection" in text
    header = (out / "regression.csv").read_text().splitlines()[1]
    assert header == "model_id,feature,coef,p_value,vif,S,R2,R2_adj"
    sweep_header = (out / "sweep_MODEL_8.csv").read_text().splitlines()[1]
    assert sweep_header == "model_id,hidden,restart,epochs,train_mse,val_mse,test_mse,test_mae,infer_time_s,status"
    assert (out / "nets" / "MODEL_8.net").exists()


def test_pipeline_rerun_is_byte_identical(tiny_run, tiny_cfg, tmp_path):
    out, _ = tiny_run
    pl.run_pipeline(tiny_cfg, tmp_path)
    for p in out.rglob("*.csv"):
        if p.name == "timing.csv":
            continue
        assert filecmp.cmp(p, tmp_path / p.relative_to(out), shallow=False), p.name


def test_report_numbers_recomputable_from_persisted_data(tiny_run, tiny_cfg, tmp_path):
    out, report = tiny_run
    from exfl.dataset import read_dataset_csv
    sample = read_dataset_csv(out / "sample.csv")
    analysis = pl.analyze_stage(tiny_cfg, sample)
    for mid, fit in report.fits.items():
        assert analysis.fits[mid].R2 == fit.R2
        assert list(analysis.fits[mid].betas) == list(fit.betas)


def test_insufficient_rows_names_the_stage(tiny_cfg, tmp_path):
    cfg = replace(tiny_cfg, stats_sample_n=10 ** 6)
    with pytest.raises(StageFailure) as err:
        pl.run_pipeline(cfg, tmp_path, train=False)
    assert err.value.stage == "sample"
    assert "INSUFFICIENT_ROWS" in str(err.value)
    # partial outputs from earlier stages stay on disk
    assert (tmp_path / "dataset.csv").exists()


# --- command line -----------------------------------------------------------

def write_cfg(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(TINY)
    return p


def test_cli_help(capsys):
    assert main(["--help"]) == 0
    assert main(["pipeline", "--help"]) == 0
    assert "--hidden-range" in capsys.readouterr().out


def test_cli_unknown_flag_is_echoed(capsys):
    assert main(["pipeline", "--frobnicate"]) == 1
    assert "--frobnicate" in capsys.readouterr().err


def test_cli_usage_errors(capsys, tmp_path):
    assert main([]) == 1
    assert main(["pipeline", "--hidden-range", "5..3", "--out", str(tmp_path)]) == 1
    assert "empty range" in capsys.readouterr().err
    assert main(["train", "--models", "M99", "--out", str(tmp_path)]) == 1
    assert main(["pipeline", "--config", str(tmp_path / "nope.cfg")]) == 1


def test_cli_analyze_without_dataset(capsys, tmp_path):
    assert main(["analyze", "--out", str(tmp_path)]) == 2
    assert "dataset.csv" in capsys.readouterr().err


def test_cli_pipeline_and_stagewise_agree(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    full = tmp_path / "full"
    assert main(["pipeline", "--config", str(cfg), "--seed", "7", "--out", str(full)]) == 0
    assert (full / "report.txt").exists()

    staged = tmp_path / "staged"
    monkeypatch.setenv("EXFL_OUT", str(staged))
    base = ["--config", str(cfg), "--seed", "7"]
    assert main(["simulate", *base]) == 0
    assert main(["analyze", *base]) == 0  # draws the sample itself when sample.csv is absent
    for name in ("correlation.csv", "regression.csv", "dataset.csv"):
        assert filecmp.cmp(full / name, staged / name, shallow=False), name
    assert main(["sample", *base]) == 0
    assert filecmp.cmp(full / "sample.csv", staged / "sample.csv", shallow=False)
    assert main(["train", *base, "--models", "M7,M8"]) == 0
    assert filecmp.cmp(full / "comparison.csv", staged / "comparison.csv", shallow=False)
    assert main(["report", *base]) == 0
    assert "ANN vs regression" in (staged / "report.txt").read_text()


def test_cli_flag_overrides(tmp_path):
    import argparse
    from exfl.cli import resolve_config
    ns = argparse.Namespace(config=None, seed=5, out=str(tmp_path), models="8,M3", hidden_range="2..4",
                            restarts=3, workers=2, desk=True)
    cfg = resolve_config(ns)
    assert (cfg.seed, cfg.h_min, cfg.h_max, cfg.restarts, cfg.workers) == (5, 2, 4, 3, 2)
    assert cfg.mlp_models == ("MODEL_8", "MODEL_3")
    assert Path(cfg.out) == tmp_path

from __future__ import annotations

import json
from pathlib import Path

import pytest

from stresslens.cli import INPUT_ERROR, PIPELINE_ERROR, main

def run(workdir: Path, stage: str, *extra: str) -> int:
    argv = [
        stage,
        "--workdir", str(workdir),
        "--subjects", "12",
        "--days", "30",
        "--seed", "11",
        "--ntree", "40",
        "--k", "16",
    ]
    argv += list(extra)
    return main(argv)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    workdir = tmp_path_factory.mktemp("run")
    for stage in ("synth", "validate", "featurize", "select", "train", "evaluate", "ablate"):
        assert run(workdir, stage) == 0, stage
    return workdir


def test_happy_path_emits_all_artifacts(pipeline_dir):
    for name in (
        "data/calls.csv",
        "data/stress.csv",
        "validation.json",
        "features.csv",
        "ranked_features.csv",
        "selected_columns.json",
        "forest.json",
        "metrics.json",
        "ablation.json",
        "ablation.csv",
    ):
        assert (pipeline_dir / name).exists(), name


def test_metrics_report_shape(pipeline_dir):
    payload = json.loads((pipeline_dir / "metrics.json").read_text())
    metrics = payload["metrics"]
    assert 0.0 <= metrics["accuracy"] <= 1.0
    assert metrics["ci95"][0] <= metrics["accuracy"] <= metrics["ci95"][1]
    assert payload["seed"] == 11


def test_selected_columns_count(pipeline_dir):
    payload = json.loads((pipeline_dir / "selected_columns.json").read_text())
    assert len(payload["columns"]) == 16


def test_ablation_has_eight_ordered_rows(pipeline_dir):
    payload = json.loads((pipeline_dir / "ablation.json").read_text())
    assert payload["order"] == [
        "all",
        "baseline",
        "weather",
        "personality",
        "phone",
        "personality+weather",
        "personality+phone",
        "weather+phone",
    ]
    lines = (pipeline_dir / "ablation.csv").read_text().strip().splitlines()
    assert lines[0] == "Model,Accuracy,Kappa,Sensitivity,Specificity,F1"
    assert len(lines) == 9


def test_report_renders_tables(pipeline_dir, capsys):
    assert run(pipeline_dir, "report") == 0
    out = capsys.readouterr().out
    assert "Feature-family comparison" in out
    assert "No Information Rate" in out
    assert (pipeline_dir / "report.txt").exists()


def test_validation_counts(pipeline_dir):
    payload = json.loads((pipeline_dir / "validation.json").read_text())
    assert payload["subjects_retained"] == 12
    for counts in payload["streams"].values():
        assert counts["rows_read"] == counts["rows_stored"] + counts["duplicates_dropped"]


def test_missing_predecessor_names_stage(tmp_path, capsys):
    code = run(tmp_path / "empty", "select")
    assert code == INPUT_ERROR
    assert "featurize" in capsys.readouterr().err


def test_stale_artifact_detected(pipeline_dir, tmp_path, capsys):
    code = run(pipeline_dir, "select", "--seed", "999")
    assert code == INPUT_ERROR
    assert "stale artifact" in capsys.readouterr().err


def test_corrupt_input_is_an_input_error(tmp_path, capsys):
    workdir = tmp_path / "w"
    assert run(workdir, "synth") == 0
    calls = workdir / "data" / "calls.csv"
    lines = calls.read_text().splitlines()
    lines[1] = lines[1].replace("incoming", "inbound").replace("outgoing", "inbound").replace("missed", "inbound")
    calls.write_text("\n".join(lines) + "\n")
    assert run(workdir, "validate") == INPUT_ERROR
    assert "line 2" in capsys.readouterr().err


def test_infeasible_coverage_is_a_pipeline_error(tmp_path, capsys):
    workdir = tmp_path / "w"
    assert run(workdir, "synth") == 0
    config = {"min_consecutive_days": 1000}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    code = run(workdir, "validate", "--config", str(cfg_path))
    assert code == PIPELINE_ERROR
    assert "no eligible subjects" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"beans": 3}))
    assert main(["synth", "--config", str(cfg_path)]) == INPUT_ERROR
    assert "unknown config keys" in capsys.readouterr().err


def test_reruns_are_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for workdir in (a, b):
        for stage in ("synth", "featurize", "select", "train", "evaluate"):
            assert run(workdir, stage) == 0
    for name in (
        "data/calls.csv",
        "features.csv",
        "ranked_features.csv",
        "selected_columns.json",
        "forest.json",
        "metrics.json",
    ):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_featurize_is_stable_across_hash_seeds(tmp_path):
    """String-hash salting must not leak into feature bytes (set-iteration order)."""
    import os
    import subprocess
    import sys

    digests = []
    for hash_seed in ("1", "20"):
        workdir = tmp_path / f"h{hash_seed}"
        env = dict(os.environ, PYTHONHASHSEED=hash_seed)
        for stage in ("synth", "featurize"):
            proc = subprocess.run(
                [
                    sys.executable, "-m", "stresslens.cli", stage,
                    "--workdir", str(workdir),
                    "--subjects", "6", "--days", "10", "--seed", "3",
                ],
                env=env,
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
        digests.append((workdir / "features.csv").read_bytes())
    assert digests[0] == digests[1]


def test_threads_env_cap_changes_nothing(tmp_path, monkeypatch):
    a = tmp_path / "a"
    monkeypatch.setenv("STRESSLENS_THREADS", "1")
    for stage in ("synth", "featurize"):
        assert run(a, stage) == 0
    monkeypatch.setenv("STRESSLENS_THREADS", "2")
    b = tmp_path / "b"
    for stage in ("synth", "featurize"):
        assert run(b, stage) == 0
    assert (a / "features.csv").read_bytes() == (b / "features.csv").read_bytes()


def test_kfold_scheme_reports_summary(tmp_path):
    workdir = tmp_path / "w"
    for stage in ("synth", "featurize"):
        assert run(workdir, stage) == 0
    assert run(workdir, "evaluate", "--scheme", "kfold") == 0
    payload = json.loads((workdir / "metrics.json").read_text())
    assert set(payload["summary"]["accuracy"]) == {"min", "q1", "median", "mean", "q3", "max"}
    assert len(payload["folds"]) == 10


def test_family_restriction_flag(tmp_path):
    workdir = tmp_path / "w"
    for stage in ("synth", "featurize"):
        assert run(workdir, stage) == 0
    assert run(workdir, "ablate", "--families", "all,baseline") == 0
    payload = json.loads((workdir / "ablation.json").read_text())
    assert payload["order"] == ["all", "baseline"]

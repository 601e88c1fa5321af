"""
End-to-end pipeline tests on a small synthetic corpus.
"""

import json
from pathlib import Path

import pytest
import yaml

from conftest import record_row
from config import load_pipeline_config
from ems_audit.artifacts import read_jsonl
from ems_audit.cli import main
from ems_audit.pipeline import read_labelled, run_pipeline, run_preprocess, run_split

SMALL_RUN = {
    "seed": 5,
    "paths": {"work_dir": "work"},
    "split": [0.8, 0.1, 0.1],
    "hyperparams": {"embed_dim": 8, "hidden_dim": 6, "batch_size": 16, "max_epochs": 2},
    "synth": {"n_documents": 60, "no_encounter_rate": 0.0},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(SMALL_RUN), encoding="utf-8")
    return path


@pytest.mark.integration
class TestRecordStages:
    """Tests for malformed and duplicate input lines in the record stages."""

    def test_preprocess_skips_malformed_line(self, write_jsonl_file, tmp_path):
        path = write_jsonl_file(
            "records.jsonl", [record_row("A", extra="kept"), "{broken", record_row("B")]
        )
        out = tmp_path / "tokens.jsonl"
        assert run_preprocess(path, out) == 2
        rows = read_jsonl(out)
        assert [r["incident_id"] for r in rows] == ["A", "B"]
        assert rows[0]["extra"] == "kept"
        assert all("tokens" in r for r in rows)

    def test_preprocess_writes_duplicate_id_once(self, write_jsonl_file, tmp_path):
        rows = [record_row("A"), record_row("A", report_text="second copy"), record_row("B")]
        path = write_jsonl_file("records.jsonl", rows)
        out = tmp_path / "tokens.jsonl"
        assert run_preprocess(path, out) == 2
        written = read_jsonl(out)
        assert [r["incident_id"] for r in written] == ["A", "B"]
        assert written[0]["report_text"] == record_row("A")["report_text"]
        paths = run_split(out, tmp_path / "split", (0.5, 0.0, 0.5), seed=1)
        ids = [r["incident_id"] for name in ("train", "test") for r in read_jsonl(paths[name])]
        assert sorted(ids) == ["A", "B"]

    def test_split_skips_malformed_line(self, write_jsonl_file, tmp_path):
        path = write_jsonl_file("labelled.jsonl", [record_row("A"), "[1, 2]", record_row("B")])
        paths = run_split(path, tmp_path / "split", (1.0, 0.0, 0.0), seed=1)
        assert len(read_jsonl(paths["train"])) == 2


@pytest.mark.integration
@pytest.mark.slow
class TestRunPipeline:
    """Tests for run_pipeline()."""

    def test_artifacts(self, config_file, gazetteer, protocol_rules, tmp_path):
        config = load_pipeline_config(config_file)
        result = run_pipeline(config, gazetteer, protocol_rules)
        work = tmp_path / "work"
        for name in ("records", "gold", "preprocessed", "labelled", "model", "predictions"):
            assert result.artifacts[name].exists(), name
        sizes = [len(read_jsonl(result.artifacts[f"split_{n}"])) for n in ("train", "dev", "test")]
        assert sizes == [48, 6, 6]
        assert len(result.training_log.epochs) <= 2
        assert (work / "training_log.csv").exists()
        assert set(result.audit) == {"case", "provider", "system"}
        assert result.evaluation.documents == 6
        saved = json.loads((work / "eval_report.json").read_text())
        assert set(saved["entity"]) == {"strict", "type"}

    def test_test_split_carries_verified_labels(self, config_file, gazetteer, protocol_rules):
        config = load_pipeline_config(config_file)
        result = run_pipeline(config, gazetteer, protocol_rules)
        gold = {s.incident_id: s for s in read_labelled(result.artifacts["gold"])}
        for s in read_labelled(result.artifacts["split_test"]):
            assert s.tags == gold[s.incident_id].tags

    def test_deterministic(self, config_file, gazetteer, protocol_rules):
        config = load_pipeline_config(config_file)
        first = run_pipeline(config, gazetteer, protocol_rules)
        first_bytes = first.artifacts["model"].read_bytes()
        second = run_pipeline(config, gazetteer, protocol_rules)
        assert second.artifacts["model"].read_bytes() == first_bytes


@pytest.mark.integration
@pytest.mark.slow
def test_cli_pipeline(config_file, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("EMS_AUDIT_SEED", raising=False)
    assert main(["pipeline", "--config", str(config_file), "--work-dir", "cli_run"]) == 0
    out = capsys.readouterr().out
    assert "Entity level (MUC-5)" in out
    assert (tmp_path / "cli_run" / "audit_provider.json").exists()


@pytest.mark.integration
@pytest.mark.slow
def test_demo_corpus_reaches_target_scores(gazetteer, protocol_rules, tmp_path):
    """Seeded 2,000-document demo run: type F1 >= 0.95, strict F1 >= 0.93 on the test split."""
    demo = Path(__file__).resolve().parents[1] / "demo.yaml"
    config = load_pipeline_config(demo).with_overrides(work_dir=tmp_path / "demo")
    assert config.synth.n_documents == 2000
    assert config.synth.misspelling_rate == 0.05
    result = run_pipeline(config, gazetteer, protocol_rules)
    assert result.evaluation.entity["type"].f1 >= 0.95
    assert result.evaluation.entity["strict"].f1 >= 0.93

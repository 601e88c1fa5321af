"""
Pytest configuration and shared fixtures for the EMS audit tests.

This module provides:
- Project-root import path setup
- Record row and JSONL file factories
- The packaged gazetteer and protocol rules (loaded once per session)
- Small labelled corpora for training, evaluation and statistics tests
"""

import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List

import pytest

# Add the project root to sys.path for test discovery
repo_root = None
for p in Path(__file__).resolve().parents:
    if (p / "pyproject.toml").exists():
        repo_root = p
        break

if repo_root is not None:
    repo_str = str(repo_root)
    if repo_str not in sys.path:
        sys.path.insert(0, repo_str)

from ems_audit.audit import default_protocol_rules  # noqa: E402
from ems_audit.entities import EntityType, LabelledSentence  # noqa: E402
from ems_audit.gazetteer import Gazetteer, Synonym, default_gazetteer  # noqa: E402


def record_row(incident_id: str = "INC000001", **overrides: Any) -> Dict[str, Any]:
    """A valid case-record row; keyword arguments replace or add fields."""
    row = {
        "incident_id": incident_id,
        "provider_id": "P001",
        "timestamp": "2019-04-01T08:00:00",
        "patient_encounter": True,
        "report_text": "o a pt alert. 12 lead ecg done. aspirin given.",
        "chief_complaint": "Chest Pain",
        "physical_findings": [],
        "systolic_bp": 120,
        "capillary_glucose_recorded": False,
        "bleeding_control_applied": False,
    }
    row.update(overrides)
    return row


@pytest.fixture
def make_row() -> Callable[..., Dict[str, Any]]:
    """Factory for case-record rows."""
    return record_row


@pytest.fixture
def write_jsonl_file(tmp_path) -> Callable[[str, Iterable[Any]], Path]:
    """Write rows (dicts or raw strings) as lines of a file under tmp_path."""

    def _write(name: str, rows: Iterable[Any]) -> Path:
        path = tmp_path / name
        lines = [r if isinstance(r, str) else json.dumps(r) for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="session")
def gazetteer() -> Gazetteer:
    """The packaged synonym list."""
    return default_gazetteer()


@pytest.fixture(scope="session")
def protocol_rules():
    """The packaged protocol table."""
    return default_protocol_rules()


@pytest.fixture
def tiny_gazetteer() -> Gazetteer:
    """A hand-built gazetteer covering a few entities."""
    return Gazetteer(
        (
            Synonym("12 lead ecg", EntityType.ECG),
            Synonym("ecg", EntityType.ECG, force_exact=True),
            Synonym("aspirin", EntityType.ASPIRIN),
            Synonym("gtn", EntityType.GTN, force_exact=True),
            Synonym("facial droop", EntityType.STROKEASSESSMENT),
            Synonym("iv ns 0 9%", EntityType.NORMALSALINE),
        ),
        max_edit_distance=1,
    )


def sentence(incident_id: str, text: str, tags: str) -> LabelledSentence:
    """Build a labelled sentence from space-separated tokens and tags."""
    return LabelledSentence(incident_id, tuple(text.split()), tuple(tags.split()))


@pytest.fixture
def toy_corpus() -> List[LabelledSentence]:
    """Short sentences where 'aspirin' is always ASPIRIN and nothing else is tagged."""
    return [
        sentence("T1", "aspirin given", "B-ASPIRIN O"),
        sentence("T2", "pt given aspirin", "O O B-ASPIRIN"),
        sentence("T3", "no pain", "O O"),
        sentence("T4", "aspirin", "B-ASPIRIN"),
        sentence("T5", "pt alert", "O O"),
        sentence("T6", "given aspirin stat", "O B-ASPIRIN O"),
    ]

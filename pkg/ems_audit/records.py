"""
Ambulance case records: ingest, encounter filtering and dataset splitting.

Records arrive as UTF-8 line-delimited JSON, one incident per line, with
snake_case keys matching the ``CaseRecord`` fields. Unknown keys are ignored
so that later stages can add columns (``tokens``, ``tags``) to the same rows.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .artifacts import iter_jsonl, write_jsonl
from .errors import RecordParseError

SBP_MIN = 0
SBP_MAX = 400
DEFAULT_SPLIT_FRACTIONS: Tuple[float, float, float] = (0.95, 0.025, 0.025)
SPLIT_NAMES = ("train", "dev", "test")


@dataclass(frozen=True)
class CaseRecord:
    """One ambulance incident: structured fields plus the free-text report."""

    incident_id: str
    provider_id: str
    patient_encounter: bool
    report_text: str
    timestamp: str = ""
    chief_complaint: str | None = None
    physical_findings: Tuple[str, ...] | None = None
    systolic_bp: int | None = None
    capillary_glucose_recorded: bool = False
    bleeding_control_applied: bool = False

    @classmethod
    def from_dict(cls, data: Dict[str, Any], line_number: int = 0) -> "CaseRecord":
        """Build a record from a parsed JSON object.

        Raises:
            RecordParseError: If a required key is missing or a value has the
                wrong type or range.
        """

        def fail(key: str, message: str) -> RecordParseError:
            return RecordParseError(line_number, key, message)

        incident_id = data.get("incident_id")
        if incident_id is None:
            raise fail("incident_id", "missing required field")
        if not isinstance(incident_id, str) or not incident_id.strip():
            raise fail("incident_id", "must be a non-empty string")
        if "report_text" not in data:
            raise fail("report_text", "missing required field")
        report_text = data["report_text"]
        if report_text is None:
            report_text = ""
        if not isinstance(report_text, str):
            raise fail("report_text", "must be a string")

        systolic_bp = data.get("systolic_bp")
        if systolic_bp is not None:
            if isinstance(systolic_bp, bool) or not isinstance(systolic_bp, int):
                raise fail("systolic_bp", f"must be an integer, got {systolic_bp!r}")
            if not SBP_MIN <= systolic_bp <= SBP_MAX:
                raise fail("systolic_bp", f"{systolic_bp} outside [{SBP_MIN}, {SBP_MAX}] mmHg")

        findings = data.get("physical_findings")
        if findings is not None:
            if not isinstance(findings, list) or not all(isinstance(f, str) for f in findings):
                raise fail("physical_findings", "must be a list of strings")
            findings = tuple(findings)

        chief_complaint = data.get("chief_complaint")
        if chief_complaint is not None and not isinstance(chief_complaint, str):
            raise fail("chief_complaint", "must be a string")

        flags = {}
        for key in ("patient_encounter", "capillary_glucose_recorded", "bleeding_control_applied"):
            value = data.get(key, key == "patient_encounter")
            if not isinstance(value, bool):
                raise fail(key, "must be a boolean")
            flags[key] = value

        return cls(
            incident_id=incident_id,
            provider_id=str(data.get("provider_id") or ""),
            report_text=report_text,
            timestamp=str(data.get("timestamp") or ""),
            chief_complaint=chief_complaint,
            physical_findings=findings,
            systolic_bp=systolic_bp,
            **flags,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the JSONL row layout."""
        data = asdict(self)
        if self.physical_findings is not None:
            data["physical_findings"] = list(self.physical_findings)
        return {k: v for k, v in data.items() if v is not None}


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/dev/test partitions of a filtered record set."""

    train: List[CaseRecord]
    dev: List[CaseRecord]
    test: List[CaseRecord]
    seed: int

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.dev), len(self.test)

    def named(self) -> Dict[str, List[CaseRecord]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


@dataclass
class LoadResult:
    """Records that parsed plus the per-line errors that did not."""

    records: List[CaseRecord] = field(default_factory=list)
    errors: List[RecordParseError] = field(default_factory=list)
    # Parsed JSON objects of the accepted lines, aligned with ``records``
    rows: List[Dict[str, Any]] = field(default_factory=list)


def parse_records(path: Path | str) -> LoadResult:
    """Parse a record JSONL file, collecting per-line failures.

    Raises:
        OSError: If the file cannot be read.
    """
    result = LoadResult()
    seen: set[str] = set()
    for line_number, line in iter_jsonl(path):
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            result.errors.append(RecordParseError(line_number, None, f"invalid JSON ({e.msg})"))
            continue
        if not isinstance(data, dict):
            result.errors.append(RecordParseError(line_number, None, "expected a JSON object"))
            continue
        try:
            record = CaseRecord.from_dict(data, line_number)
        except RecordParseError as e:
            result.errors.append(e)
            continue
        if record.incident_id in seen:
            result.errors.append(
                RecordParseError(
                    line_number, "incident_id", f"duplicate incident_id {record.incident_id!r}"
                )
            )
            continue
        seen.add(record.incident_id)
        result.records.append(record)
        result.rows.append(data)
    return result


def load_record_rows(path: Path | str, strict: bool = False) -> LoadResult:
    """Parse ``path`` and log every per-line failure with its line number.

    With ``strict`` the first failure is raised instead. Malformed and
    duplicate lines are absent from both ``records`` and ``rows``.
    """
    result = parse_records(path)
    for error in result.errors:
        if strict:
            raise error
        logging.warning(f"{path}: {error}")
    logging.info(f"Loaded {len(result.records)} records from {path} ({len(result.errors)} errors)")
    return result


def load_records(path: Path | str, strict: bool = False) -> List[CaseRecord]:
    """Load all parseable case records from ``path``."""
    return load_record_rows(path, strict).records


def filter_encounters(records: Sequence[CaseRecord]) -> List[CaseRecord]:
    """Drop incidents without a patient encounter or without report text."""
    kept = []
    no_encounter = 0
    missing_text = 0
    for record in records:
        if not record.patient_encounter:
            no_encounter += 1
        elif not record.report_text.strip():
            missing_text += 1
        else:
            kept.append(record)
    if no_encounter or missing_text:
        logging.info(
            f"Excluded {no_encounter} incidents without patient encounter and "
            f"{missing_text} with missing text reports"
        )
    return kept


def split_sizes(n: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    """Floor-allocate ``n`` items to dev and test; the remainder goes to train."""
    _validate_fractions(fractions)
    dev = math.floor(n * fractions[1] + 1e-9)
    test = math.floor(n * fractions[2] + 1e-9)
    return n - dev - test, dev, test


def split_dataset(
    records: Sequence[CaseRecord],
    fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
    seed: int = 7,
) -> DatasetSplit:
    """Partition records into seeded-random train/dev/test splits.

    Records are ordered by ``incident_id`` before shuffling, so the result
    depends only on the record set and the seed, not on input order.

    Raises:
        ValueError: If fractions are invalid, records are empty or ids repeat.
    """
    if not records:
        raise ValueError("cannot split an empty record set")
    n_train, n_dev, _ = split_sizes(len(records), fractions)
    ordered = sorted(records, key=lambda r: r.incident_id)
    if len({r.incident_id for r in ordered}) != len(ordered):
        raise ValueError("incident_id values must be unique before splitting")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ordered))
    shuffled = [ordered[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        dev=shuffled[n_train : n_train + n_dev],
        test=shuffled[n_train + n_dev :],
        seed=seed,
    )


def write_split(
    split: DatasetSplit,
    rows_by_id: Dict[str, Dict[str, Any]],
    output_dir: Path | str,
) -> Dict[str, Path]:
    """Write ``train.jsonl``, ``dev.jsonl`` and ``test.jsonl``.

    ``rows_by_id`` maps incident ids to the full JSONL rows so columns added by
    earlier stages survive the split.
    """
    output_dir = Path(output_dir)
    paths = {}
    for name, records in split.named().items():
        rows = [rows_by_id.get(r.incident_id, r.to_dict()) for r in records]
        paths[name] = write_jsonl(output_dir / f"{name}.jsonl", rows)
    logging.info(f"Split sizes train/dev/test = {split.sizes()} (seed {split.seed})")
    return paths


def _validate_fractions(fractions: Sequence[float]) -> None:
    if len(fractions) != 3:
        raise ValueError(f"expected three split fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions):
        raise ValueError(f"split fractions must be non-negative, got {list(fractions)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {sum(fractions)!r}")

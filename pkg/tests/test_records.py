"""
Tests for case-record ingest, encounter filtering and dataset splitting.
"""

import pytest

from conftest import record_row
from ems_audit.errors import RecordParseError
from ems_audit.records import (
    DEFAULT_SPLIT_FRACTIONS,
    CaseRecord,
    filter_encounters,
    load_records,
    parse_records,
    split_dataset,
    split_sizes,
    write_split,
)
from ems_audit.artifacts import read_jsonl


def _records(n: int, **overrides):
    return [CaseRecord.from_dict(record_row(f"INC{i:06d}", **overrides)) for i in range(n)]


class TestCaseRecord:
    """Tests for CaseRecord.from_dict validation."""

    def test_valid_row(self):
        """A complete row parses with every field."""
        rec = CaseRecord.from_dict(record_row(physical_findings=["Active Bleeding"]))
        assert rec.incident_id == "INC000001"
        assert rec.systolic_bp == 120
        assert rec.physical_findings == ("Active Bleeding",)
        assert rec.patient_encounter is True

    def test_optional_fields_default(self):
        """Only incident_id and report_text are required."""
        rec = CaseRecord.from_dict({"incident_id": "X", "report_text": "pt alert"})
        assert rec.patient_encounter is True
        assert rec.systolic_bp is None
        assert rec.chief_complaint is None
        assert rec.capillary_glucose_recorded is False

    def test_null_report_text_becomes_empty(self):
        rec = CaseRecord.from_dict(record_row(report_text=None))
        assert rec.report_text == ""

    @pytest.mark.parametrize(
        "field,value",
        [
            ("systolic_bp", 401),
            ("systolic_bp", -1),
            ("systolic_bp", "120"),
            ("systolic_bp", True),
            ("patient_encounter", "yes"),
            ("physical_findings", "Active Bleeding"),
            ("incident_id", ""),
        ],
    )
    def test_invalid_field_names_field(self, field, value):
        """Out-of-range or mistyped values raise with the field name."""
        with pytest.raises(RecordParseError) as exc:
            CaseRecord.from_dict(record_row(**{field: value}), line_number=3)
        assert exc.value.field == field
        assert exc.value.line_number == 3
        assert "line 3" in str(exc.value)

    def test_sbp_bounds_inclusive(self):
        assert CaseRecord.from_dict(record_row(systolic_bp=0)).systolic_bp == 0
        assert CaseRecord.from_dict(record_row(systolic_bp=400)).systolic_bp == 400

    def test_to_dict_drops_missing(self):
        rec = CaseRecord.from_dict({"incident_id": "X", "report_text": "t"})
        data = rec.to_dict()
        assert "systolic_bp" not in data
        assert CaseRecord.from_dict(data) == rec


class TestLoadRecords:
    """Tests for JSONL ingest with per-line errors."""

    def test_bad_lines_are_collected(self, write_jsonl_file):
        """Malformed JSON, bad types and duplicates are reported by line."""
        path = write_jsonl_file(
            "records.jsonl",
            [
                record_row("A"),
                "{not json",
                record_row("B", systolic_bp=999),
                "[1, 2]",
                record_row("A"),
                record_row("C"),
            ],
        )
        result = parse_records(path)
        assert [r.incident_id for r in result.records] == ["A", "C"]
        assert [e.line_number for e in result.errors] == [2, 3, 4, 5]
        assert "duplicate" in str(result.errors[-1])
        assert [row["incident_id"] for row in result.rows] == ["A", "C"]

    def test_load_records_strict_raises_first_error(self, write_jsonl_file):
        path = write_jsonl_file("records.jsonl", [record_row("A"), "{oops"])
        with pytest.raises(RecordParseError, match="line 2"):
            load_records(path, strict=True)

    def test_load_records_lenient(self, write_jsonl_file):
        path = write_jsonl_file("records.jsonl", [record_row("A"), "{oops"])
        assert len(load_records(path)) == 1

    def test_blank_lines_skipped(self, write_jsonl_file):
        path = write_jsonl_file("records.jsonl", [record_row("A"), "", record_row("B")])
        result = parse_records(path)
        assert len(result.records) == 2
        assert not result.errors


class TestFilterEncounters:
    """Tests for encounter filtering."""

    def test_drops_no_encounter_and_empty_text(self):
        records = [
            CaseRecord.from_dict(record_row("A")),
            CaseRecord.from_dict(record_row("B", patient_encounter=False)),
            CaseRecord.from_dict(record_row("C", report_text="   ")),
            CaseRecord.from_dict(record_row("D", report_text=None)),
        ]
        assert [r.incident_id for r in filter_encounters(records)] == ["A"]

    def test_keeps_order(self):
        records = _records(5)
        assert filter_encounters(records) == records


class TestSplitDataset:
    """Tests for seeded train/dev/test splitting."""

    def test_default_fractions(self):
        assert DEFAULT_SPLIT_FRACTIONS == (0.95, 0.025, 0.025)

    @pytest.mark.parametrize(
        "n,expected",
        [(1000, (950, 25, 25)), (10, (10, 0, 0)), (40, (38, 1, 1)), (0, (0, 0, 0))],
    )
    def test_split_sizes_floor_dev_test(self, n, expected):
        """Dev and test sizes are floored; train takes the remainder."""
        assert split_sizes(n, DEFAULT_SPLIT_FRACTIONS) == expected

    @pytest.mark.parametrize("fractions", [(0.5, 0.5), (0.9, 0.2, -0.1), (0.5, 0.2, 0.2)])
    def test_invalid_fractions(self, fractions):
        with pytest.raises(ValueError):
            split_sizes(10, fractions)

    def test_partition_is_disjoint_and_complete(self):
        records = _records(200)
        split = split_dataset(records, (0.8, 0.1, 0.1), seed=3)
        ids = [r.incident_id for part in (split.train, split.dev, split.test) for r in part]
        assert sorted(ids) == sorted(r.incident_id for r in records)
        assert len(set(ids)) == len(ids)
        assert split.sizes() == (160, 20, 20)

    def test_same_seed_same_split(self):
        records = _records(100)
        a = split_dataset(records, seed=11)
        b = split_dataset(list(reversed(records)), seed=11)
        assert a.named() == b.named()

    def test_different_seed_differs(self):
        records = _records(100)
        a = split_dataset(records, (0.5, 0.25, 0.25), seed=1)
        b = split_dataset(records, (0.5, 0.25, 0.25), seed=2)
        assert a.train != b.train

    def test_empty_input_raises(self):
        with pytest.raises(ValueError, match="empty"):
            split_dataset([])

    def test_duplicate_ids_raise(self):
        rec = CaseRecord.from_dict(record_row("A"))
        with pytest.raises(ValueError, match="unique"):
            split_dataset([rec, rec])

    def test_write_split_keeps_extra_columns(self, tmp_path):
        """Columns added by earlier stages survive the split."""
        records = _records(20)
        rows = {r.incident_id: {**r.to_dict(), "tokens": ["x"]} for r in records}
        split = split_dataset(records, (0.5, 0.25, 0.25), seed=7)
        paths = write_split(split, rows, tmp_path / "split")
        assert set(paths) == {"train", "dev", "test"}
        train_rows = read_jsonl(paths["train"])
        assert len(train_rows) == 10
        assert all(row["tokens"] == ["x"] for row in train_rows)

"""
Tests for MUC-5 entity scoring and token-level metrics.
"""

import random

import pytest

from conftest import sentence
from ems_audit.entities import EntitySpan, EntityType
from ems_audit.evaluation import (
    MatchMode,
    MucCategory,
    MucCounts,
    evaluate_documents,
    muc5_align,
    muc5_categorize,
    muc5_corpus,
    muc5_scores,
    token_metrics,
)

pytestmark = pytest.mark.unit

ECG, GTN, ASA = EntityType.ECG, EntityType.GTN, EntityType.ASPIRIN


def span(entity, start, end):
    return EntitySpan(entity, start, end)


class TestMucCategorize:
    """Tests for per-document MUC-5 categorisation."""

    def test_partial_overlap_same_type(self):
        gold, pred = [span(ECG, 2, 4)], [span(ECG, 3, 4)]
        assert muc5_categorize(gold, pred, "strict") == MucCounts(INC=1)
        assert muc5_categorize(gold, pred, "type") == MucCounts(COR=1)

    def test_missing(self):
        for mode in MatchMode:
            assert muc5_categorize([span(GTN, 0, 1)], [], mode) == MucCounts(MIS=1)

    def test_spurious(self):
        for mode in MatchMode:
            assert muc5_categorize([], [span(ECG, 0, 0)], mode) == MucCounts(SPU=1)

    def test_type_mismatch_is_incorrect_in_both_modes(self):
        for mode in MatchMode:
            assert muc5_categorize([span(ECG, 0, 1)], [span(GTN, 0, 1)], mode) == MucCounts(INC=1)

    def test_gold_counted_once_per_overlapping_prediction(self):
        gold, pred = [span(ECG, 0, 3)], [span(ECG, 0, 1), span(ECG, 3, 3)]
        counts = muc5_categorize(gold, pred, "type")
        assert counts == MucCounts(COR=2)
        assert muc5_scores(counts).POS == 2

    def test_prediction_overlapping_two_golds(self):
        gold, pred = [span(ECG, 0, 1), span(GTN, 2, 3)], [span(ECG, 1, 2)]
        decisions = muc5_align(gold, pred, "type")
        assert [d.category for d in decisions] == [MucCategory.COR, MucCategory.INC]

    def test_exact_match(self):
        gold = [span(ECG, 0, 2), span(ASA, 4, 4)]
        for mode in MatchMode:
            counts = muc5_categorize(gold, list(gold), mode)
            assert counts == MucCounts(COR=2)
            scores = muc5_scores(counts)
            assert (scores.precision, scores.recall, scores.f1) == (1.0, 1.0, 1.0)

    def test_overlapping_gold_rejected(self):
        with pytest.raises(ValueError, match="gold spans overlap"):
            muc5_categorize([span(ECG, 0, 2), span(GTN, 2, 3)], [])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            muc5_categorize([], [], "fuzzy")

    def test_decision_order(self):
        gold = [span(ECG, 0, 0), span(GTN, 5, 5)]
        pred = [span(ASA, 3, 3), span(ECG, 0, 0)]
        decisions = muc5_align(gold, pred, "strict", incident_id="A")
        assert [d.category for d in decisions] == [
            MucCategory.COR,
            MucCategory.SPU,
            MucCategory.MIS,
        ]
        assert decisions[0].to_dict()["incident_id"] == "A"

    def test_random_properties(self):
        """PAR is 0, strict COR <= type COR, and MIS/SPU do not depend on mode."""
        rng = random.Random(21)
        entities = [ECG, GTN, ASA]
        for _ in range(1000):
            gold, i = [], 0
            while i < 12:
                if rng.random() < 0.3:
                    end = min(11, i + rng.randint(0, 2))
                    gold.append(span(rng.choice(entities), i, end))
                    i = end + 1
                else:
                    i += 1
            pred = []
            for _ in range(rng.randint(0, 5)):
                start = rng.randint(0, 11)
                pred.append(span(rng.choice(entities), start, min(11, start + rng.randint(0, 2))))
            strict = muc5_categorize(gold, pred, "strict")
            typed = muc5_categorize(gold, pred, "type")
            assert strict.PAR == typed.PAR == 0
            assert strict.COR <= typed.COR
            assert (strict.MIS, strict.SPU) == (typed.MIS, typed.SPU)
            assert strict.COR + strict.INC == typed.COR + typed.INC

    def test_corpus_length_mismatch(self):
        with pytest.raises(ValueError, match="1 gold documents but 0 predicted"):
            muc5_corpus([[]], [])


class TestMucScores:
    """Tests for muc5_scores()."""

    def test_type_matching_row(self):
        scores = muc5_scores(MucCounts(COR=1336, INC=0, MIS=25, SPU=26))
        assert (scores.POS, scores.ACT) == (1361, 1362)
        assert round(scores.precision, 3) == 0.981
        assert round(scores.recall, 3) == 0.982
        assert round(scores.f1, 3) == 0.981

    def test_strict_row(self):
        scores = muc5_scores(MucCounts(COR=1329, INC=7, MIS=25, SPU=26))
        assert (scores.POS, scores.ACT) == (1361, 1362)
        assert round(scores.precision, 3) == 0.976
        assert round(scores.recall, 3) == 0.976
        assert round(scores.f1, 3) == 0.976

    def test_all_zero(self):
        scores = muc5_scores(MucCounts())
        assert (scores.precision, scores.recall, scores.f1) == (0.0, 0.0, 0.0)

    def test_act_identity(self):
        counts = MucCounts(COR=3, INC=2, MIS=4, SPU=1)
        scores = muc5_scores(counts)
        assert scores.ACT == counts.COR + counts.INC + counts.SPU
        assert scores.POS == counts.COR + counts.INC + counts.MIS

    def test_monotone_in_cor(self):
        previous = muc5_scores(MucCounts(COR=0, INC=3, MIS=2, SPU=4))
        for cor in range(1, 20):
            current = muc5_scores(MucCounts(COR=cor, INC=3, MIS=2, SPU=4))
            assert current.precision >= previous.precision
            assert current.recall >= previous.recall
            assert current.f1 >= previous.f1
            previous = current

    def test_to_dict(self):
        data = muc5_scores(MucCounts(COR=1, SPU=1)).to_dict()
        assert data["ACT"] == 2
        assert data["precision"] == 0.5


class TestTokenMetrics:
    """Tests for token_metrics()."""

    def test_weighted_average(self):
        gold = ["B-ECG", "O", "O", "B-GTN", "B-GTN", "B-GTN"]
        pred = ["B-ECG", "B-ECG", "B-ECG", "B-GTN", "B-GTN", "B-GTN"]
        report = token_metrics(gold, pred)
        by_tag = {c.tag: c for c in report.classes}
        assert by_tag["B-ECG"].f1 == pytest.approx(0.5)
        assert by_tag["B-GTN"].f1 == 1.0
        assert report.weighted_f1 == pytest.approx(0.875)
        assert report.support == 4

    def test_perfect_recall_miss(self):
        gold = ["B-ASPIRIN"] * 45
        pred = ["B-ASPIRIN"] * 44 + ["O"]
        c = token_metrics(gold, pred).classes[0]
        assert c.precision == 1.0
        assert round(c.recall, 3) == 0.978
        assert round(c.f1, 3) == 0.989

    def test_perfect_prediction(self):
        tags = ["B-ECG", "I-ECG", "O", "B-ASPIRIN"]
        report = token_metrics(tags, tags)
        assert all((c.precision, c.recall, c.f1) == (1.0, 1.0, 1.0) for c in report.classes)
        assert [c.tag for c in report.classes] == ["B-ECG", "I-ECG", "B-ASPIRIN"]

    def test_outside_excluded(self):
        report = token_metrics(["O", "O"], ["O", "O"])
        assert report.classes == []
        assert report.weighted_f1 == 0.0

    def test_predicted_only_class_has_zero_support(self):
        report = token_metrics(["O"], ["B-GTN"])
        assert report.classes[0].support == 0
        assert report.support == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            token_metrics(["O"], [])

    def test_random_agrees_with_counts(self):
        """Per-tag scores and weighted averages match direct tp/fp/fn counting."""
        rng = random.Random(21)
        pool = ["O", "O", "B-ECG", "I-ECG", "B-GTN", "B-ASPIRIN"]
        for _ in range(200):
            n = rng.randint(1, 30)
            gold = [rng.choice(pool) for _ in range(n)]
            pred = [g if rng.random() < 0.6 else rng.choice(pool) for g in gold]
            report = token_metrics(gold, pred)
            weighted_f1 = 0.0
            for c in report.classes:
                tp = sum(g == p == c.tag for g, p in zip(gold, pred))
                n_gold, n_pred = gold.count(c.tag), pred.count(c.tag)
                assert c.support == n_gold
                assert c.precision == pytest.approx(tp / n_pred if n_pred else 0.0)
                assert c.recall == pytest.approx(tp / n_gold if n_gold else 0.0)
                denom = n_gold + n_pred
                assert c.f1 == pytest.approx(2 * tp / denom if denom else 0.0)
                weighted_f1 += c.f1 * n_gold
            support = sum(t != "O" for t in gold)
            assert report.support == support
            expected = weighted_f1 / support if support else 0.0
            assert report.weighted_f1 == pytest.approx(expected)


class TestEvaluateDocuments:
    """Tests for evaluate_documents()."""

    def test_report(self):
        gold = [
            sentence("A", "12 lead ecg done", "B-ECG I-ECG I-ECG O"),
            sentence("B", "aspirin given", "B-ASPIRIN O"),
        ]
        pred = [
            sentence("B", "aspirin given", "B-ASPIRIN O"),
            sentence("A", "12 lead ecg done", "O B-ECG I-ECG O"),
        ]
        report = evaluate_documents(gold, pred)
        assert report.documents == 2
        assert report.entity["strict"].counts == MucCounts(COR=1, INC=1)
        assert report.entity["type"].counts == MucCounts(COR=2)
        errors = report.to_dict(include_errors=True)["errors"]
        assert len(errors["strict"]) == 1
        assert errors["type"] == []

    def test_missing_prediction(self):
        with pytest.raises(ValueError, match="no prediction for incident A"):
            evaluate_documents([sentence("A", "x", "O")], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="1 gold tags but 2 predicted"):
            evaluate_documents([sentence("A", "x", "O")], [sentence("A", "x y", "O O")])

    def test_single_mode(self):
        gold = [sentence("A", "x", "B-ECG")]
        report = evaluate_documents(gold, gold, modes=("type",))
        assert list(report.entity) == ["type"]

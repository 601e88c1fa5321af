"""
Token-level and entity-level evaluation of predicted IOB2 tags.

Token level: one-vs-rest precision, recall and F1 per tag on exact tag
equality, and their averages weighted by each tag's gold token count. The
``O`` tag is excluded everywhere.

Entity level: MUC-5 categories over entity spans in two modes.

- ``strict``: a prediction is correct only with the same type and the same
  boundaries.
- ``type``: a prediction is correct when its type matches and it shares at
  least one token with the gold span.

Every prediction is compared with each gold span it overlaps, so a gold span
overlapped by several predictions is counted once per prediction and POS can
exceed the number of gold entities. Partial matches are never produced, so
PAR is always 0.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence

from sklearn.metrics import precision_recall_fscore_support

from .entities import OUTSIDE, TAG_TO_ID, EntitySpan, LabelledSentence


class MatchMode(str, Enum):
    STRICT = "strict"
    TYPE = "type"


class MucCategory(str, Enum):
    COR = "COR"
    INC = "INC"
    PAR = "PAR"
    MIS = "MIS"
    SPU = "SPU"


@dataclass
class MucCounts:
    COR: int = 0
    INC: int = 0
    PAR: int = 0
    MIS: int = 0
    SPU: int = 0

    def add(self, other: "MucCounts") -> "MucCounts":
        """Accumulate ``other`` into this instance and return it."""
        for name in ("COR", "INC", "PAR", "MIS", "SPU"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class MucScores:
    counts: MucCounts
    POS: int
    ACT: int
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> Dict[str, float | int]:
        return {
            **self.counts.to_dict(),
            "POS": self.POS,
            "ACT": self.ACT,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class MucDecision:
    """One categorisation: a prediction against a gold span, or an unpaired span."""

    category: MucCategory
    gold: Optional[EntitySpan]
    pred: Optional[EntitySpan]
    incident_id: str = ""

    def to_dict(self) -> Dict[str, object]:
        return {
            "incident_id": self.incident_id,
            "category": self.category.value,
            "gold": self.gold.to_dict() if self.gold else None,
            "pred": self.pred.to_dict() if self.pred else None,
        }


def _check_partition(gold: Sequence[EntitySpan]) -> None:
    ordered = sorted(gold, key=lambda s: (s.start, s.end))
    for left, right in zip(ordered, ordered[1:]):
        if left.overlaps(right):
            raise ValueError(f"gold spans overlap: {left} and {right}")


def muc5_align(
    gold: Sequence[EntitySpan],
    pred: Sequence[EntitySpan],
    mode: MatchMode | str = MatchMode.STRICT,
    incident_id: str = "",
) -> List[MucDecision]:
    """The categorisation decisions behind ``muc5_categorize``.

    Decisions for predictions come first, in span order, followed by one MIS
    decision per gold span that no prediction overlaps.

    Raises:
        ValueError: If gold spans overlap or the mode is unknown.
    """
    mode = MatchMode(mode)
    _check_partition(gold)
    gold_sorted = sorted(gold, key=EntitySpan.sort_key)
    decisions = []
    overlapped = set()
    for p in sorted(pred, key=EntitySpan.sort_key):
        hits = [g for g in gold_sorted if g.overlaps(p)]
        if not hits:
            decisions.append(MucDecision(MucCategory.SPU, None, p, incident_id))
            continue
        for g in hits:
            overlapped.add(g)
            if g.entity != p.entity:
                category = MucCategory.INC
            elif (g.start, g.end) == (p.start, p.end) or mode is MatchMode.TYPE:
                category = MucCategory.COR
            else:
                category = MucCategory.INC
            decisions.append(MucDecision(category, g, p, incident_id))
    for g in gold_sorted:
        if g not in overlapped:
            decisions.append(MucDecision(MucCategory.MIS, g, None, incident_id))
    return decisions


def counts_from_decisions(decisions: Iterable[MucDecision]) -> MucCounts:
    counts = MucCounts()
    for decision in decisions:
        name = decision.category.value
        setattr(counts, name, getattr(counts, name) + 1)
    return counts


def muc5_categorize(
    gold: Sequence[EntitySpan],
    pred: Sequence[EntitySpan],
    mode: MatchMode | str = MatchMode.STRICT,
) -> MucCounts:
    """MUC-5 counts for the spans of one document."""
    return counts_from_decisions(muc5_align(gold, pred, mode))


def muc5_corpus(
    gold_docs: Sequence[Sequence[EntitySpan]],
    pred_docs: Sequence[Sequence[EntitySpan]],
    mode: MatchMode | str = MatchMode.STRICT,
) -> MucCounts:
    """Sum of per-document counts, documents paired by position.

    Raises:
        ValueError: If the two lists differ in length.
    """
    if len(gold_docs) != len(pred_docs):
        raise ValueError(f"{len(gold_docs)} gold documents but {len(pred_docs)} predicted")
    total = MucCounts()
    for gold, pred in zip(gold_docs, pred_docs):
        total.add(muc5_categorize(gold, pred, mode))
    return total


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def muc5_scores(counts: MucCounts) -> MucScores:
    """POS, ACT, precision, recall and F1 from MUC-5 counts.

    Any division by zero yields 0.
    """
    pos = counts.COR + counts.INC + counts.PAR + counts.MIS
    act = counts.COR + counts.INC + counts.PAR + counts.SPU
    precision = _ratio(counts.COR, act)
    recall = _ratio(counts.COR, pos)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return MucScores(counts, pos, act, precision, recall, f1)


# ============================================================================
# TOKEN LEVEL
# ============================================================================


@dataclass(frozen=True)
class ClassMetrics:
    tag: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class TokenClassReport:
    classes: List[ClassMetrics] = field(default_factory=list)
    weighted_precision: float = 0.0
    weighted_recall: float = 0.0
    weighted_f1: float = 0.0
    support: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "classes": [asdict(c) for c in self.classes],
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
                "support": self.support,
            },
        }


def token_metrics(gold: Sequence[str], pred: Sequence[str]) -> TokenClassReport:
    """Per-tag and support-weighted token metrics, ``O`` excluded.

    Args:
        gold: Gold tags of every token of the evaluation set, in order.
        pred: Predicted tags aligned with ``gold``.

    Raises:
        ValueError: If the sequences differ in length.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold tags but {len(pred)} predicted tags")
    tags = sorted(
        (set(gold) | set(pred)) - {OUTSIDE}, key=lambda t: TAG_TO_ID.get(t, len(TAG_TO_ID))
    )
    report = TokenClassReport()
    if not tags:
        return report

    precision, recall, f1, support = precision_recall_fscore_support(
        list(gold), list(pred), labels=tags, average=None, zero_division=0
    )
    report.classes = [
        ClassMetrics(tag, float(p), float(r), float(f), int(s))
        for tag, p, r, f, s in zip(tags, precision, recall, f1, support)
    ]
    report.support = int(support.sum())
    if report.support:
        weighted = precision_recall_fscore_support(
            list(gold), list(pred), labels=tags, average="weighted", zero_division=0
        )
        report.weighted_precision, report.weighted_recall, report.weighted_f1 = (
            float(v) for v in weighted[:3]
        )
    return report


# ============================================================================
# DOCUMENT SETS
# ============================================================================


@dataclass
class EvaluationReport:
    token: TokenClassReport
    entity: Dict[str, MucScores]
    documents: int
    decisions: Dict[str, List[MucDecision]] = field(default_factory=dict)

    def to_dict(self, include_errors: bool = False) -> Dict[str, object]:
        data: Dict[str, object] = {
            "documents": self.documents,
            "entity": {mode: scores.to_dict() for mode, scores in self.entity.items()},
            "token": self.token.to_dict(),
        }
        if include_errors:
            data["errors"] = {
                mode: [d.to_dict() for d in decisions if d.category is not MucCategory.COR]
                for mode, decisions in self.decisions.items()
            }
        return data


def evaluate_documents(
    gold: Sequence[LabelledSentence],
    pred: Sequence[LabelledSentence],
    modes: Sequence[MatchMode | str] = (MatchMode.STRICT, MatchMode.TYPE),
) -> EvaluationReport:
    """Evaluate predicted documents against gold documents with the same ids.

    Raises:
        ValueError: If a gold document has no prediction or token counts differ.
    """
    pred_by_id = {p.incident_id: p for p in pred}
    extra = set(pred_by_id) - {g.incident_id for g in gold}
    if extra:
        logging.warning(f"Ignoring {len(extra)} predictions without gold documents")

    gold_tags: List[str] = []
    pred_tags: List[str] = []
    decisions: Dict[str, List[MucDecision]] = {MatchMode(m).value: [] for m in modes}
    for g in gold:
        p = pred_by_id.get(g.incident_id)
        if p is None:
            raise ValueError(f"no prediction for incident {g.incident_id}")
        if len(p.tags) != len(g.tags):
            raise ValueError(
                f"{g.incident_id}: {len(g.tags)} gold tags but {len(p.tags)} predicted"
            )
        gold_tags.extend(g.tags)
        pred_tags.extend(p.tags)
        gold_spans, pred_spans = g.spans(), p.spans()
        for mode in decisions:
            decisions[mode].extend(muc5_align(gold_spans, pred_spans, mode, g.incident_id))

    entity = {
        mode: muc5_scores(counts_from_decisions(mode_decisions))
        for mode, mode_decisions in decisions.items()
    }
    return EvaluationReport(token_metrics(gold_tags, pred_tags), entity, len(gold), decisions)

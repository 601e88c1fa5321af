"""
Clinical entity inventory, entity spans and the IOB2 tag scheme.

The inventory holds 17 entity types in three categories. Tags use the short
type names (``B-ECG``, ``I-ECG``); reports that need the category-qualified
label (``PROCEDURE_ECG``) read ``EntityType.qualified_name``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Sequence, Tuple


class EntityCategory(str, Enum):
    CLINICAL_PROCEDURE = "ClinicalProcedure"
    CLINICAL_FINDING = "ClinicalFinding"
    MEDICATION = "Medication"

    @property
    def label_prefix(self) -> str:
        return _CATEGORY_PREFIX[self]


_CATEGORY_PREFIX = {
    EntityCategory.CLINICAL_PROCEDURE: "PROCEDURE",
    EntityCategory.CLINICAL_FINDING: "FINDING",
    EntityCategory.MEDICATION: "MEDICATION",
}


class EntityType(str, Enum):
    """The 17 clinical entity types, in inventory order."""

    ECG = "ECG"
    STROKEASSESSMENT = "STROKEASSESSMENT"
    IVCANNULA = "IVCANNULA"
    BURNSCOOLING = "BURNSCOOLING"
    VALSALVA = "VALSALVA"
    BLEEDING = "BLEEDING"
    OBVIOUSDEATH = "OBVIOUSDEATH"
    GTN = "GTN"
    ASPIRIN = "ASPIRIN"
    NORMALSALINE = "NORMALSALINE"
    PENTHROX = "PENTHROX"
    DEXTROSE = "DEXTROSE"
    ADRENALINE = "ADRENALINE"
    DIAZEPAM = "DIAZEPAM"
    SALBUTAMOL = "SALBUTAMOL"
    TRAMADOL = "TRAMADOL"
    SYNTOMETRINE = "SYNTOMETRINE"

    @property
    def category(self) -> EntityCategory:
        return _ENTITY_CATEGORY[self]

    @property
    def qualified_name(self) -> str:
        """Category-qualified label, e.g. ``MEDICATION_ASPIRIN``."""
        return f"{self.category.label_prefix}_{self.value}"

    @classmethod
    def parse(cls, name: str) -> "EntityType":
        """Resolve a short (``ECG``) or qualified (``PROCEDURE_ECG``) name.

        Raises:
            ValueError: If the name is not in the inventory.
        """
        key = name.strip().upper()
        if key in cls.__members__:
            return cls[key]
        for entity in cls:
            if entity.qualified_name == key:
                return entity
        raise ValueError(f"unknown entity {name.strip()}")


_ENTITY_CATEGORY: Dict[EntityType, EntityCategory] = {
    **{
        e: EntityCategory.CLINICAL_PROCEDURE
        for e in (
            EntityType.ECG,
            EntityType.STROKEASSESSMENT,
            EntityType.IVCANNULA,
            EntityType.BURNSCOOLING,
            EntityType.VALSALVA,
        )
    },
    EntityType.BLEEDING: EntityCategory.CLINICAL_FINDING,
    EntityType.OBVIOUSDEATH: EntityCategory.CLINICAL_FINDING,
    **{
        e: EntityCategory.MEDICATION
        for e in (
            EntityType.GTN,
            EntityType.ASPIRIN,
            EntityType.NORMALSALINE,
            EntityType.PENTHROX,
            EntityType.DEXTROSE,
            EntityType.ADRENALINE,
            EntityType.DIAZEPAM,
            EntityType.SALBUTAMOL,
            EntityType.TRAMADOL,
            EntityType.SYNTOMETRINE,
        )
    },
}

OUTSIDE = "O"

# O first, then a B-/I- pair per entity type
TAGS: Tuple[str, ...] = (OUTSIDE,) + tuple(
    f"{prefix}-{entity.value}" for entity in EntityType for prefix in ("B", "I")
)
TAG_TO_ID: Dict[str, int] = {tag: i for i, tag in enumerate(TAGS)}
NUM_TAGS = len(TAGS)


def parse_tag(tag: str) -> Tuple[str, EntityType | None]:
    """Split a tag into its prefix (``B``/``I``/``O``) and entity type.

    Raises:
        ValueError: If the tag is not in the tag set.
    """
    if tag == OUTSIDE:
        return OUTSIDE, None
    if tag not in TAG_TO_ID:
        raise ValueError(f"unknown tag {tag!r}")
    prefix, name = tag.split("-", 1)
    return prefix, EntityType(name)


def qualified_tag(tag: str) -> str:
    """``B-ECG`` -> ``B-PROCEDURE_ECG``; ``O`` is returned unchanged."""
    prefix, entity = parse_tag(tag)
    if entity is None:
        return tag
    return f"{prefix}-{entity.qualified_name}"


@dataclass(frozen=True)
class EntitySpan:
    """An entity mention over tokens ``start``..``end`` (both inclusive)."""

    entity: EntityType
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid span [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start <= other.end and other.start <= self.end

    def sort_key(self) -> Tuple[int, int, int]:
        return self.start, self.end, TAG_TO_ID[f"B-{self.entity.value}"]

    def to_dict(self) -> Dict[str, Any]:
        return {"entity": self.entity.value, "start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EntitySpan":
        return cls(EntityType.parse(data["entity"]), int(data["start"]), int(data["end"]))


def spans_from_tags(tags: Sequence[str]) -> List[EntitySpan]:
    """Decode IOB2 tags into entity spans.

    Ill-formed input is repaired: an ``I-`` tag that does not continue a span
    of the same type opens a new span, as if it were ``B-``.
    """
    spans: List[EntitySpan] = []
    current: EntityType | None = None
    start = 0
    for i, tag in enumerate(tags):
        prefix, entity = parse_tag(tag)
        if prefix == "I" and entity == current:
            continue
        if current is not None:
            spans.append(EntitySpan(current, start, i - 1))
        current, start = entity, i
    if current is not None:
        spans.append(EntitySpan(current, start, len(tags) - 1))
    return spans


def tags_from_spans(spans: Iterable[EntitySpan], length: int) -> List[str]:
    """Encode non-overlapping spans as an IOB2 tag sequence of ``length``.

    Raises:
        ValueError: If a span falls outside the sequence or spans overlap.
    """
    tags = [OUTSIDE] * length
    for span in spans:
        if span.end >= length:
            raise ValueError(f"span {span} exceeds sequence length {length}")
        if any(tags[i] != OUTSIDE for i in range(span.start, span.end + 1)):
            raise ValueError(f"span {span} overlaps another span")
        tags[span.start] = f"B-{span.entity.value}"
        for i in range(span.start + 1, span.end + 1):
            tags[i] = f"I-{span.entity.value}"
    return tags


@dataclass(frozen=True)
class LabelledSentence:
    """Tokens of one report with a parallel IOB2 tag sequence."""

    incident_id: str
    tokens: Tuple[str, ...]
    tags: Tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{self.incident_id}: {len(self.tokens)} tokens but {len(self.tags)} tags"
            )

    def spans(self) -> List[EntitySpan]:
        return spans_from_tags(self.tags)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "incident_id": self.incident_id,
            "tokens": list(self.tokens),
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LabelledSentence":
        """Build from a JSONL row carrying ``tokens`` and ``tags`` arrays.

        Raises:
            ValueError: If either array is missing or a tag is unknown.
        """
        incident_id = str(data.get("incident_id", ""))
        if "tokens" not in data or "tags" not in data:
            raise ValueError(f"{incident_id or '<no id>'}: row needs 'tokens' and 'tags'")
        tags = tuple(data["tags"])
        for tag in tags:
            parse_tag(tag)
        return cls(incident_id, tuple(data["tokens"]), tags)

"""
Gazetteer-driven weak labelling.

Each entity type has a list of synonyms. A synonym matches a window of as
many consecutive tokens as the synonym has; windows are compared as strings
joined by single spaces. Phrases of 5 or more characters (interior spaces
included) tolerate up to ``max_edit_distance`` Levenshtein edits unless the
synonym is marked exact. Overlapping candidate matches are resolved in favour
of the longer span, then the leftmost start, then gazetteer file order.

Negation is not modelled: a documented mention counts whether or not it is
negated.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from rapidfuzz.distance import Levenshtein
from tqdm import tqdm

from .artifacts import iter_jsonl
from .entities import TAG_TO_ID, EntitySpan, EntityType, LabelledSentence, tags_from_spans
from .errors import GazetteerError
from .preprocess import TokenizedSentence, normalize

FUZZY_MIN_CHARS = 5
DEFAULT_MAX_EDIT_DISTANCE = 1
MATCH_POLICIES = ("fuzzy", "exact")


@dataclass(frozen=True)
class Synonym:
    """A normalized surface form of an entity."""

    phrase: str
    entity: EntityType
    force_exact: bool = False

    @property
    def width(self) -> int:
        """Number of tokens the phrase spans."""
        return len(self.phrase.split(" "))

    @property
    def fuzzy_eligible(self) -> bool:
        return len(self.phrase) >= FUZZY_MIN_CHARS and not self.force_exact


@dataclass(frozen=True)
class Gazetteer:
    """Ordered synonym inventory plus the fuzzy-match budget."""

    synonyms: Tuple[Synonym, ...]
    max_edit_distance: int = DEFAULT_MAX_EDIT_DISTANCE

    def __post_init__(self):
        if self.max_edit_distance < 0:
            raise ValueError(f"max_edit_distance must be >= 0, got {self.max_edit_distance}")

    def entities(self) -> set[EntityType]:
        return {s.entity for s in self.synonyms}

    def missing_entities(self) -> List[EntityType]:
        covered = self.entities()
        return [e for e in EntityType if e not in covered]

    def for_entity(self, entity: EntityType) -> List[Synonym]:
        return [s for s in self.synonyms if s.entity == entity]


# ============================================================================
# LOADING
# ============================================================================


def parse_gazetteer_line(line: str, line_number: int = 0) -> Synonym | None:
    """Parse one ``ENTITY<TAB>phrase<TAB>fuzzy|exact`` line.

    Returns None for blank lines and ``#`` comments.

    Raises:
        GazetteerError: On a malformed line, unknown entity or empty phrase.
    """
    stripped = line.rstrip("\r\n")
    if not stripped.strip() or stripped.lstrip().startswith("#"):
        return None
    columns = stripped.split("\t")
    if len(columns) != 3:
        raise GazetteerError(f"expected 3 tab-separated columns, got {len(columns)}", line_number)
    name, phrase, policy = (c.strip() for c in columns)
    try:
        entity = EntityType.parse(name)
    except ValueError as e:
        raise GazetteerError(str(e), line_number) from e
    policy = policy.lower()
    if policy not in MATCH_POLICIES:
        raise GazetteerError(f"match policy must be fuzzy or exact, got {policy!r}", line_number)
    normalized = normalize(phrase)
    if not normalized:
        raise GazetteerError("empty phrase", line_number)
    return Synonym(phrase=normalized, entity=entity, force_exact=policy == "exact")


def load_gazetteer(
    path: Path | str,
    max_edit_distance: int = DEFAULT_MAX_EDIT_DISTANCE,
    require_all_entities: bool = True,
) -> Gazetteer:
    """Load a gazetteer file.

    Args:
        path: Tab-separated synonym file.
        max_edit_distance: Fuzzy budget for phrases of 5+ characters.
        require_all_entities: Reject files that leave an entity type without
            a synonym.

    Raises:
        GazetteerError: On malformed lines, duplicate phrases or missing
            entity coverage.
    """
    with open(path, "r", encoding="utf-8") as f:
        return _build_gazetteer(f, max_edit_distance, require_all_entities)


def default_gazetteer(max_edit_distance: int = DEFAULT_MAX_EDIT_DISTANCE) -> Gazetteer:
    """The packaged synonym list (illustrative, not a curated clinical list)."""
    source = resources.files("ems_audit") / "data" / "default_gazetteer.tsv"
    with source.open("r", encoding="utf-8") as f:
        return _build_gazetteer(f, max_edit_distance, require_all_entities=True)


def _build_gazetteer(
    lines: Iterable[str], max_edit_distance: int, require_all_entities: bool
) -> Gazetteer:
    synonyms: List[Synonym] = []
    seen: Dict[str, int] = {}
    for line_number, line in enumerate(lines, start=1):
        synonym = parse_gazetteer_line(line, line_number)
        if synonym is None:
            continue
        if synonym.phrase in seen:
            raise GazetteerError(
                f"duplicate phrase {synonym.phrase!r} (first on line {seen[synonym.phrase]})",
                line_number,
            )
        seen[synonym.phrase] = line_number
        synonyms.append(synonym)
    gazetteer = Gazetteer(tuple(synonyms), max_edit_distance)
    missing = gazetteer.missing_entities()
    if require_all_entities and missing:
        raise GazetteerError(
            "no synonyms for entity types: " + ", ".join(e.value for e in missing)
        )
    logging.debug(f"Loaded gazetteer with {len(synonyms)} synonyms")
    return gazetteer


# ============================================================================
# STRING DISTANCE
# ============================================================================


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit-cost insert, delete and substitute."""
    return Levenshtein.distance(a, b)


def within_edit_distance(a: str, b: str, max_dist: int) -> bool:
    """True iff ``edit_distance(a, b) <= max_dist``.

    The cutoff lets rapidfuzz stop as soon as the budget is exceeded.
    """
    if max_dist < 0:
        return False
    return Levenshtein.distance(a, b, score_cutoff=max_dist) <= max_dist


# ============================================================================
# MATCHING AND LABELLING
# ============================================================================


def _token_list(tokens: TokenizedSentence | Sequence[str]) -> Sequence[str]:
    return tokens.tokens if isinstance(tokens, TokenizedSentence) else tokens


def _window_matches(window: str, syn: Synonym, max_dist: int) -> bool:
    if window == syn.phrase:
        return True
    return syn.fuzzy_eligible and within_edit_distance(window, syn.phrase, max_dist)


def match_synonym(
    tokens: TokenizedSentence | Sequence[str], syn: Synonym, max_dist: int
) -> List[EntitySpan]:
    """All token windows of the synonym's width that match its phrase."""
    toks = _token_list(tokens)
    width = syn.width
    spans = []
    for start in range(len(toks) - width + 1):
        window = " ".join(toks[start : start + width])
        if _window_matches(window, syn, max_dist):
            spans.append(EntitySpan(syn.entity, start, start + width - 1))
    return spans


def resolve_overlaps(candidates: Sequence[Tuple[EntitySpan, int]]) -> List[EntitySpan]:
    """Select non-overlapping spans from ``(span, synonym_order)`` candidates.

    Longer spans win; ties go to the leftmost start, then the synonym that
    appears first in the gazetteer.
    """
    ranked = sorted(candidates, key=lambda c: (-c[0].length, c[0].start, c[1]))
    taken: set[int] = set()
    chosen = []
    for span, _ in ranked:
        positions = range(span.start, span.end + 1)
        if any(p in taken for p in positions):
            continue
        taken.update(positions)
        chosen.append(span)
    return sorted(chosen, key=lambda s: s.start)


def candidate_spans(
    tokens: TokenizedSentence | Sequence[str], gaz: Gazetteer
) -> List[Tuple[EntitySpan, int]]:
    """Every synonym match in the sentence, tagged with the synonym's order."""
    toks = _token_list(tokens)
    windows: Dict[int, Dict[str, List[int]]] = {}
    candidates = []
    for order, syn in enumerate(gaz.synonyms):
        width = syn.width
        if width > len(toks):
            continue
        if width not in windows:
            index: Dict[str, List[int]] = {}
            for start in range(len(toks) - width + 1):
                index.setdefault(" ".join(toks[start : start + width]), []).append(start)
            windows[width] = index
        if syn.fuzzy_eligible and gaz.max_edit_distance > 0:
            matched = [
                w for w in windows[width] if _window_matches(w, syn, gaz.max_edit_distance)
            ]
        else:
            matched = [syn.phrase] if syn.phrase in windows[width] else []
        for window in matched:
            for start in windows[width][window]:
                candidates.append((EntitySpan(syn.entity, start, start + width - 1), order))
    return candidates


def weak_label(tokens: TokenizedSentence | Sequence[str], gaz: Gazetteer) -> List[str]:
    """IOB2 tags for a sentence from gazetteer matches."""
    toks = _token_list(tokens)
    spans = resolve_overlaps(candidate_spans(toks, gaz))
    return tags_from_spans(spans, len(toks))


def label_rows(rows: List[dict], gaz: Gazetteer, show_progress: bool = False) -> List[dict]:
    """Add a ``tags`` array to every row that carries ``tokens``."""
    labelled = []
    for row in tqdm(rows, desc="Labelling", unit="doc", disable=not show_progress):
        labelled.append({**row, "tags": weak_label(row["tokens"], gaz)})
    return labelled


# ============================================================================
# CLINICIAN OVERRIDES
# ============================================================================


@dataclass(frozen=True)
class TagPatch:
    """Replace the tag at ``index`` of incident ``incident_id``."""

    incident_id: str
    index: int
    tag: str

    def to_dict(self) -> dict:
        return {"incident_id": self.incident_id, "index": self.index, "tag": self.tag}


def load_overrides(path: Path | str) -> List[TagPatch]:
    """Read a JSONL patch file of ``{incident_id, index, tag}`` objects.

    Raises:
        GazetteerError: On malformed lines or unknown tags.
    """
    patches = []
    for line_number, line in iter_jsonl(path):
        try:
            data = json.loads(line)
            patch = TagPatch(str(data["incident_id"]), int(data["index"]), str(data["tag"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise GazetteerError(f"malformed override ({e})", line_number) from e
        if patch.tag not in TAG_TO_ID:
            raise GazetteerError(f"unknown tag {patch.tag!r}", line_number)
        patches.append(patch)
    return patches


def apply_overrides(
    sentences: Sequence[LabelledSentence], patches: Iterable[TagPatch]
) -> List[LabelledSentence]:
    """Apply correction patches to labelled sentences.

    Raises:
        GazetteerError: If a patch names an unknown incident or an index
            outside its sentence.
    """
    tags_by_id: Dict[str, List[str]] = {s.incident_id: list(s.tags) for s in sentences}
    applied = 0
    for patch in patches:
        tags = tags_by_id.get(patch.incident_id)
        if tags is None:
            raise GazetteerError(f"override for unknown incident {patch.incident_id!r}")
        if not 0 <= patch.index < len(tags):
            raise GazetteerError(
                f"override index {patch.index} outside {patch.incident_id} "
                f"({len(tags)} tokens)"
            )
        tags[patch.index] = patch.tag
        applied += 1
    logging.info(f"Applied {applied} tag overrides")
    return [
        LabelledSentence(s.incident_id, s.tokens, tuple(tags_by_id[s.incident_id]))
        for s in sentences
    ]


def derive_overrides(
    weak: Sequence[LabelledSentence], verified: Sequence[LabelledSentence]
) -> List[TagPatch]:
    """Patches that turn ``weak`` labels into ``verified`` labels.

    Incidents absent from ``verified`` produce no patches.

    Raises:
        ValueError: If a verified sentence has different tokens.
    """
    verified_by_id = {s.incident_id: s for s in verified}
    patches = []
    for sentence in weak:
        target = verified_by_id.get(sentence.incident_id)
        if target is None:
            continue
        if target.tokens != sentence.tokens:
            raise ValueError(f"{sentence.incident_id}: verified tokens differ from weak tokens")
        for index, (old, new) in enumerate(zip(sentence.tags, target.tags)):
            if old != new:
                patches.append(TagPatch(sentence.incident_id, index, new))
    return patches

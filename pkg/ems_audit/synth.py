"""
Seeded synthetic ambulance case records with gold entity annotations.

Reports are assembled from short paramedic-style filler phrases and entity
mentions drawn from the gazetteer, then rendered as raw text with random
separators and casing so that preprocessing has real work to do. Gold spans
come from construction, never from matching.

Structured fields cycle through every protocol branch: the scenario (chest
pain, suspected stroke, bleeding, other) changes with each document and the
SBP band (>= 90, 80-89, < 80, missing) with every fourth, so any corpus of
16 or more documents covers all combinations.

Filler phrases and complaint openings that the gazetteer matches on their own
are dropped up front, and fillers are drawn again when a match would cross a
mention boundary. Mentions and their misspellings are drawn once. Weak labels
can still differ from gold where a mention is also within the edit budget of
another entity's synonym, or a misspelling falls outside the budget; gold
keeps the intended entity either way.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .artifacts import write_jsonl
from .entities import EntitySpan, EntityType, tags_from_spans
from .errors import SyntheticCorpusError
from .gazetteer import Gazetteer, Synonym, candidate_spans, default_gazetteer, weak_label
from .preprocess import normalize
from .records import CaseRecord

# Training-split entity counts of the reference dataset
TABLE_ENTITY_COUNTS: Dict[EntityType, int] = {
    EntityType.ECG: 26688,
    EntityType.STROKEASSESSMENT: 6571,
    EntityType.IVCANNULA: 2054,
    EntityType.BURNSCOOLING: 57,
    EntityType.VALSALVA: 30,
    EntityType.BLEEDING: 7422,
    EntityType.OBVIOUSDEATH: 323,
    EntityType.GTN: 2648,
    EntityType.ASPIRIN: 1644,
    EntityType.NORMALSALINE: 1371,
    EntityType.PENTHROX: 568,
    EntityType.DEXTROSE: 447,
    EntityType.ADRENALINE: 412,
    EntityType.DIAZEPAM: 394,
    EntityType.SALBUTAMOL: 1794,
    EntityType.TRAMADOL: 310,
    EntityType.SYNTOMETRINE: 45,
}


def default_entity_profile() -> Dict[EntityType, float]:
    total = sum(TABLE_ENTITY_COUNTS.values())
    return {entity: count / total for entity, count in TABLE_ENTITY_COUNTS.items()}


FILLER_PHRASES: Tuple[str, ...] = (
    "hx from pt",
    "o a pt was sitting",
    "o a pt lying on bed",
    "alert conscious",
    "o e pt not pallor or diaphoretic",
    "no sob",
    "no giddiness",
    "no nausea",
    "no vomiting",
    "afebrile",
    "no trauma",
    "no fall",
    "sinus rhythm",
    "gcs 15",
    "spo2 98% on ra",
    "spo2 95% on ra",
    "pain score 6 10",
    "pain score 3 10",
    "pt conveyed to hospital",
    "vitals stable",
    "pt ambulant",
    "no loss of consciousness",
    "pupils equal and reactive",
    "chest clear",
    "abdomen soft",
    "pt found on floor",
    "family at scene",
    "hr 88",
    "rr 18",
    "pt given reassurance",
    "pt reports pain relieved",
    "no known allergies",
    "pt has hx of hypertension",
    "pt has hx of diabetes",
    "crushing in nature",
    "non radiating",
    "total relieved",
    "stat dose",
    "1 tab",
    "x 2 7",
    "by sn",
    "pt stable throughout",
    "pt declined further",
    "no other medical complaints",
    "pt warm to touch",
    "skin dry",
    "onset 1 hr ago",
    "pt conscious",
)

COMPLAINT_OPENINGS: Dict[str, Tuple[str, ...]] = {
    "Chest Pain": ("c o chest pain", "pt complained of chest tightness"),
    "Suspected Stroke": ("sudden onset of left limb numbness", "pt unable to lift right arm"),
    "Laceration": ("pt cut hand on glass", "c o deep cut over forearm"),
    "Fall": ("pt fell from chair", "hx fr pt fell at home"),
    "Abdominal Pain": ("c o abdominal pain", "pt complained of stomach ache"),
    "Breathlessness": ("c o breathlessness", "pt wheezing on arrival"),
    "Fever": ("c o fever x 3 days", "pt feeling unwell"),
}

SCENARIO_CYCLE = ("AcuteCoronarySyndrome", "Stroke", "BleedingPatient", "Other")
SBP_BANDS = ("high", "borderline", "low", "missing")
CHIEF_COMPLAINT = {"AcuteCoronarySyndrome": "Chest Pain", "Stroke": "Suspected Stroke"}
BLEEDING_COMPLAINTS = ("Laceration", "Fall")
OTHER_COMPLAINTS = ("Abdominal Pain", "Breathlessness", "Fever", "Fall")
SEPARATORS = (" ", " ", " ", ". ", ", ", " / ", " - ", ".\n")
BASE_TIMESTAMP = datetime(2019, 4, 1)
MAX_FILLER_DRAWS = 50


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic corpus settings.

    ``entity_profile`` fractions must sum to at most 1; they are renormalized
    before sampling.
    """

    n_documents: int = 2000
    entity_profile: Mapping[EntityType, float] = field(default_factory=default_entity_profile)
    misspelling_rate: float = 0.05
    protocol_compliance_rate: float = 0.8
    min_mentions: int = 0
    max_mentions: int = 3
    n_providers: int = 25
    no_encounter_rate: float = 0.02
    uppercase_rate: float = 0.7
    filler_phrases: Tuple[str, ...] = FILLER_PHRASES
    seed: int = 7

    def __post_init__(self):
        if self.n_documents < 0:
            raise ValueError(f"n_documents must be >= 0, got {self.n_documents}")
        rates = (
            "misspelling_rate",
            "protocol_compliance_rate",
            "no_encounter_rate",
            "uppercase_rate",
        )
        for name in rates:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if any(v < 0 for v in self.entity_profile.values()):
            raise ValueError("entity profile fractions must be non-negative")
        total = sum(self.entity_profile.values())
        if total > 1.0 + 1e-9:
            raise ValueError(f"entity profile fractions sum to {total:.4f} > 1")
        if self.max_mentions > 0 and total <= 0:
            raise ValueError("entity profile is empty")
        if not 0 <= self.min_mentions <= self.max_mentions:
            raise ValueError("need 0 <= min_mentions <= max_mentions")
        if self.n_providers < 1:
            raise ValueError("n_providers must be >= 1")
        if not self.filler_phrases:
            raise ValueError("filler phrase pool is empty")

    @classmethod
    def from_config(cls, config: Dict[str, Any] | None) -> "SynthConfig":
        config = dict(config or {})
        if "entity_profile" in config:
            config["entity_profile"] = {
                EntityType.parse(k): float(v) for k, v in config["entity_profile"].items()
            }
        if "filler_phrases" in config:
            config["filler_phrases"] = tuple(config["filler_phrases"])
        unknown = set(config) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth settings: {', '.join(sorted(unknown))}")
        return cls(**config)


@dataclass(frozen=True)
class SyntheticCase:
    record: CaseRecord
    tokens: Tuple[str, ...]
    spans: Tuple[EntitySpan, ...]

    def tags(self) -> List[str]:
        return tags_from_spans(self.spans, len(self.tokens))

    def gold_row(self) -> Dict[str, Any]:
        return {
            "incident_id": self.record.incident_id,
            "tokens": list(self.tokens),
            "tags": self.tags(),
            "spans": [s.to_dict() for s in self.spans],
        }


class _Generator:
    def __init__(self, cfg: SynthConfig, gaz: Gazetteer):
        self.cfg = cfg
        self.gaz = gaz
        self.rng = np.random.default_rng(cfg.seed)
        self.entities = [e for e in EntityType if cfg.entity_profile.get(e, 0.0) > 0]
        weights = np.array([cfg.entity_profile[e] for e in self.entities], dtype=np.float64)
        self.probs = weights / weights.sum() if weights.size else weights
        self.synonyms: Dict[EntityType, List[Synonym]] = {e: gaz.for_entity(e) for e in EntityType}
        self.fillers = [normalize(p).split() for p in cfg.filler_phrases if self._is_clean(p)]
        if len(self.fillers) < len(cfg.filler_phrases):
            logging.debug(
                f"Dropped {len(cfg.filler_phrases) - len(self.fillers)} filler phrases "
                "that match gazetteer synonyms"
            )
        if not self.fillers:
            raise SyntheticCorpusError("every filler phrase matches a gazetteer synonym")
        self.openings: Dict[str, List[List[str]]] = {}
        for complaint, phrases in COMPLAINT_OPENINGS.items():
            clean = [normalize(p).split() for p in phrases if self._is_clean(p)]
            if not clean:
                raise SyntheticCorpusError(
                    f"every opening for {complaint!r} matches a gazetteer synonym"
                )
            self.openings[complaint] = clean

    def _is_clean(self, phrase: str) -> bool:
        tokens = normalize(phrase).split()
        return bool(tokens) and all(t == "O" for t in weak_label(tokens, self.gaz))

    def _pick(self, options: Sequence[Any]) -> Any:
        return options[int(self.rng.integers(len(options)))]

    # ------------------------------------------------------------------
    # structured fields

    def _structured(self, index: int) -> Dict[str, Any]:
        cfg = self.cfg
        scenario = SCENARIO_CYCLE[index % len(SCENARIO_CYCLE)]
        band = SBP_BANDS[(index // len(SCENARIO_CYCLE)) % len(SBP_BANDS)]
        sbp = {
            "high": lambda: int(self.rng.integers(90, 181)),
            "borderline": lambda: int(self.rng.integers(80, 90)),
            "low": lambda: int(self.rng.integers(50, 80)),
            "missing": lambda: None,
        }[band]()
        bleeding_in_text = (
            scenario == "BleedingPatient"
            and cfg.protocol_compliance_rate > 0
            and (index // 16) % 2 == 1
        )
        if scenario in CHIEF_COMPLAINT:
            complaint = CHIEF_COMPLAINT[scenario]
        elif scenario == "BleedingPatient":
            complaint = self._pick(BLEEDING_COMPLAINTS)
        else:
            complaint = self._pick(OTHER_COMPLAINTS)
        findings = None
        if scenario == "BleedingPatient" and not bleeding_in_text:
            findings = ["Active Bleeding"]
        compliant = cfg.protocol_compliance_rate
        return {
            "scenario": scenario,
            "sbp": sbp,
            "complaint": complaint,
            "findings": findings,
            "bleeding_in_text": bleeding_in_text,
            "glucose": bool(self.rng.random() < (compliant if scenario == "Stroke" else 0.3)),
            "bleeding_control": bool(
                self.rng.random() < (compliant if scenario == "BleedingPatient" else 0.05)
            ),
            "provider": f"P{int(self.rng.integers(cfg.n_providers)) + 1:03d}",
            "encounter": bool(self.rng.random() >= cfg.no_encounter_rate),
        }

    def _scenario_entities(self, fields_: Dict[str, Any]) -> List[EntityType]:
        rate = self.cfg.protocol_compliance_rate
        scenario, sbp = fields_["scenario"], fields_["sbp"]
        wanted: List[EntityType] = []
        if scenario == "AcuteCoronarySyndrome":
            wanted = [EntityType.ASPIRIN, EntityType.ECG]
            if sbp is not None and sbp >= 90:
                wanted.append(EntityType.GTN)
        elif scenario == "Stroke":
            wanted = [EntityType.STROKEASSESSMENT]
        elif scenario == "BleedingPatient" and sbp is not None and sbp < 80:
            wanted = [EntityType.IVCANNULA, EntityType.NORMALSALINE]
        injected = [e for e in wanted if self.rng.random() < rate]
        if fields_["bleeding_in_text"]:
            injected.insert(0, EntityType.BLEEDING)
        return injected

    # ------------------------------------------------------------------
    # report text

    def _misspell(self, phrase: str) -> str:
        tokens = phrase.split(" ")
        index = int(self.rng.integers(len(tokens)))
        token = tokens[index]
        position = int(self.rng.integers(len(token) + 1))
        letter = string.ascii_lowercase[int(self.rng.integers(26))]
        operation = self._pick(("insert", "delete", "substitute"))
        if operation == "delete" and len(token) > 1:
            position = min(position, len(token) - 1)
            token = token[:position] + token[position + 1 :]
        elif operation == "substitute":
            position = min(position, len(token) - 1)
            replacements = [c for c in string.ascii_lowercase if c != token[position]]
            token = token[:position] + self._pick(replacements) + token[position + 1 :]
        else:
            token = token[:position] + letter + token[position:]
        tokens[index] = token
        return " ".join(tokens)

    def _mention(self, entity: EntityType) -> List[str]:
        if not self.synonyms[entity]:
            raise SyntheticCorpusError(f"gazetteer has no synonyms for {entity.name}")
        synonym: Synonym = self._pick(self.synonyms[entity])
        phrase = synonym.phrase
        if synonym.fuzzy_eligible and self.rng.random() < self.cfg.misspelling_rate:
            phrase = self._misspell(phrase)
        return phrase.split(" ")

    def _layout(
        self, opening: List[str], mentions: List[Tuple[EntityType, List[str]]]
    ) -> Tuple[List[str], List[EntitySpan]]:
        tokens = list(opening)
        spans: List[EntitySpan] = []
        for entity, mention in mentions:
            for _ in range(int(self.rng.integers(1, 3))):
                tokens.extend(self._pick(self.fillers))
            spans.append(EntitySpan(entity, len(tokens), len(tokens) + len(mention) - 1))
            tokens.extend(mention)
        tokens.extend(self._pick(self.fillers))
        return tokens, spans

    def _collides(self, tokens: Sequence[str], spans: Sequence[EntitySpan]) -> bool:
        """True if a gazetteer match crosses a mention boundary or lies in filler text.

        Matches inside a single mention are allowed.
        """
        owner = [-1] * len(tokens)
        for i, span in enumerate(spans):
            owner[span.start : span.end + 1] = [i] * span.length
        for candidate, _ in candidate_spans(tokens, self.gaz):
            owners = set(owner[candidate.start : candidate.end + 1])
            if len(owners) > 1 or owners == {-1}:
                return True
        return False

    def _report(self, incident_id: str, fields_: Dict[str, Any], entities: List[EntityType]):
        opening = self._pick(self.openings[fields_["complaint"]])
        mentions = [(entity, self._mention(entity)) for entity in entities]
        for attempt in range(MAX_FILLER_DRAWS):
            tokens, spans = self._layout(opening, mentions)
            if not self._collides(tokens, spans):
                return tokens, spans
            logging.debug(f"{incident_id}: filler text formed a synonym (attempt {attempt + 1})")
        raise SyntheticCorpusError(
            f"{incident_id}: could not place filler text without forming a synonym"
        )

    def _render(self, tokens: Sequence[str]) -> str:
        parts = [tokens[0]]
        for token in tokens[1:]:
            parts.append(self._pick(SEPARATORS))
            parts.append(token)
        text = "".join(parts)
        if self.rng.random() < self.cfg.uppercase_rate:
            text = text.upper()
        return text + "."

    # ------------------------------------------------------------------

    def case(self, index: int) -> SyntheticCase:
        cfg = self.cfg
        fields_ = self._structured(index)
        count = int(self.rng.integers(cfg.min_mentions, cfg.max_mentions + 1))
        sampled: List[EntityType] = []
        if count and self.entities:
            drawn = self.rng.choice(len(self.entities), size=count, p=self.probs)
            sampled = [self.entities[i] for i in drawn]
        incident_id = f"INC{index + 1:06d}"
        entities = self._scenario_entities(fields_) + sampled
        tokens, spans = self._report(incident_id, fields_, entities)

        record = CaseRecord(
            incident_id=incident_id,
            provider_id=fields_["provider"],
            patient_encounter=fields_["encounter"],
            report_text=self._render(tokens),
            timestamp=(BASE_TIMESTAMP + timedelta(minutes=37 * index)).isoformat(),
            chief_complaint=fields_["complaint"],
            physical_findings=tuple(fields_["findings"]) if fields_["findings"] else None,
            systolic_bp=fields_["sbp"],
            capillary_glucose_recorded=fields_["glucose"],
            bleeding_control_applied=fields_["bleeding_control"],
        )
        return SyntheticCase(record, tuple(tokens), tuple(spans))


def generate_corpus(
    cfg: SynthConfig = SynthConfig(),
    gaz: Optional[Gazetteer] = None,
    show_progress: bool = False,
) -> List[SyntheticCase]:
    """Generate ``cfg.n_documents`` cases; identical config and seed give identical output."""
    generator = _Generator(cfg, gaz or default_gazetteer())
    cases = [
        generator.case(i)
        for i in tqdm(
            range(cfg.n_documents), desc="Generating", unit="doc", disable=not show_progress
        )
    ]
    mentions = sum(len(c.spans) for c in cases)
    logging.info(f"Generated {len(cases)} synthetic cases with {mentions} entity mentions")
    return cases


def write_corpus(
    cases: Sequence[SyntheticCase], records_path: Path | str, gold_path: Path | str
) -> Tuple[Path, Path]:
    """Write the record JSONL and the parallel gold annotation JSONL."""
    return (
        write_jsonl(records_path, (c.record.to_dict() for c in cases)),
        write_jsonl(gold_path, (c.gold_row() for c in cases)),
    )

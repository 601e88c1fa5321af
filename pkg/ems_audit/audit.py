"""
Clinical protocol audit.

A protocol table names clinical scenarios, the criteria that make a case
eligible for each, and the actions the protocol expects. Evidence that an
action was performed comes either from entities found in the report text or
from a boolean field of the structured record. Documenting an attempted or
offered action counts as performing it; negation is not checked.

Conditional actions depend on systolic blood pressure. When SBP is missing
the action is not required and its verdict is ``indeterminate``.

Results aggregate to three levels:

- ``case``: the verdicts of every audited case.
- ``provider``: per provider, passes over required instances of each
  (scenario, action).
- ``system``: the same frequencies over all cases.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field, fields
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import yaml

from .entities import EntitySpan, EntityType
from .errors import ProtocolRulesError
from .records import CaseRecord

SBP_THRESHOLDS = (80, 90)
AUDIT_LEVELS = ("case", "provider", "system")


class ScenarioType(str, Enum):
    ACUTE_CORONARY_SYNDROME = "AcuteCoronarySyndrome"
    STROKE = "Stroke"
    BLEEDING_PATIENT = "BleedingPatient"


class VerdictStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_REQUIRED = "not_required"
    INDETERMINATE = "indeterminate"


_STRUCTURED_FLAGS = frozenset(
    f.name for f in fields(CaseRecord) if f.type in ("bool", bool) and f.name != "patient_encounter"
)


@dataclass(frozen=True)
class EvidenceSpec:
    """Either a set of entity types (any one suffices) or a structured flag."""

    entity_any_of: Optional[FrozenSet[EntityType]] = None
    structured_flag: Optional[str] = None

    def __post_init__(self):
        if (self.entity_any_of is None) == (self.structured_flag is None):
            raise ProtocolRulesError("evidence needs exactly one of entity_any_of, structured_flag")
        if self.entity_any_of is not None and not self.entity_any_of:
            raise ProtocolRulesError("entity_any_of must list at least one entity")
        if self.structured_flag is not None and self.structured_flag not in _STRUCTURED_FLAGS:
            raise ProtocolRulesError(
                f"unknown structured flag {self.structured_flag!r} "
                f"(expected one of {', '.join(sorted(_STRUCTURED_FLAGS))})"
            )

    def satisfied(self, record: CaseRecord, found: FrozenSet[EntityType]) -> bool:
        if self.entity_any_of is not None:
            return bool(self.entity_any_of & found)
        return bool(getattr(record, self.structured_flag))


@dataclass(frozen=True)
class SbpCondition:
    """``sbp >= threshold`` (``at_least``) or ``sbp < threshold`` (``below``)."""

    comparison: str
    threshold: int

    def __post_init__(self):
        if self.comparison not in ("at_least", "below"):
            raise ProtocolRulesError(f"unknown SBP comparison {self.comparison!r}")
        if self.threshold not in SBP_THRESHOLDS:
            raise ProtocolRulesError(
                f"SBP threshold must be one of {SBP_THRESHOLDS}, got {self.threshold!r}"
            )

    def holds(self, sbp: Optional[int]) -> Optional[bool]:
        """None when SBP is unknown."""
        if sbp is None:
            return None
        if self.comparison == "at_least":
            return sbp >= self.threshold
        return sbp < self.threshold

    def describe(self) -> str:
        symbol = ">=" if self.comparison == "at_least" else "<"
        return f"SBP {symbol} {self.threshold} mmHg"


@dataclass(frozen=True)
class ActionRule:
    action_id: str
    description: str
    evidence: EvidenceSpec
    condition: Optional[SbpCondition] = None


@dataclass(frozen=True)
class Eligibility:
    chief_complaints: FrozenSet[str] = frozenset()
    physical_findings: FrozenSet[str] = frozenset()
    entity_any_of: FrozenSet[EntityType] = frozenset()

    def matches(self, record: CaseRecord, found: FrozenSet[EntityType]) -> bool:
        complaint = (record.chief_complaint or "").strip().lower()
        if complaint and complaint in self.chief_complaints:
            return True
        findings = {f.strip().lower() for f in record.physical_findings or ()}
        if findings & self.physical_findings:
            return True
        return bool(found & self.entity_any_of)


@dataclass(frozen=True)
class ScenarioRules:
    scenario: ScenarioType
    eligibility: Eligibility
    actions: Tuple[ActionRule, ...]


@dataclass(frozen=True)
class ProtocolRules:
    scenarios: Tuple[ScenarioRules, ...]

    def for_scenario(self, scenario: ScenarioType) -> ScenarioRules:
        for rules in self.scenarios:
            if rules.scenario == scenario:
                return rules
        raise KeyError(scenario)


# ============================================================================
# LOADING
# ============================================================================


def _entity_set(names: Any, where: str) -> FrozenSet[EntityType]:
    if not isinstance(names, list):
        raise ProtocolRulesError(f"{where}: expected a list of entity names")
    try:
        return frozenset(EntityType.parse(str(n)) for n in names)
    except ValueError as e:
        raise ProtocolRulesError(f"{where}: {e}") from e


def _string_set(values: Any, where: str) -> FrozenSet[str]:
    if not isinstance(values, list):
        raise ProtocolRulesError(f"{where}: expected a list of strings")
    return frozenset(str(v).strip().lower() for v in values)


def _parse_action(data: Any, where: str) -> ActionRule:
    if not isinstance(data, dict) or "id" not in data or "evidence" not in data:
        raise ProtocolRulesError(f"{where}: action needs 'id' and 'evidence'")
    where = f"{where}.{data['id']}"
    evidence = data["evidence"]
    if not isinstance(evidence, dict):
        raise ProtocolRulesError(f"{where}: evidence must be a mapping")
    unknown = set(evidence) - {"entity_any_of", "structured_flag"}
    if unknown:
        raise ProtocolRulesError(f"{where}: unknown evidence keys {sorted(unknown)}")
    spec = EvidenceSpec(
        entity_any_of=(
            _entity_set(evidence["entity_any_of"], where) if "entity_any_of" in evidence else None
        ),
        structured_flag=evidence.get("structured_flag"),
    )
    condition = None
    if data.get("condition") is not None:
        cond = data["condition"]
        if not isinstance(cond, dict) or len(cond) != 1:
            raise ProtocolRulesError(f"{where}: condition must have one SBP predicate")
        key, threshold = next(iter(cond.items()))
        comparison = {"sbp_at_least": "at_least", "sbp_below": "below"}.get(key)
        if comparison is None:
            raise ProtocolRulesError(f"{where}: unknown condition {key!r}")
        condition = SbpCondition(comparison, threshold)
    return ActionRule(str(data["id"]), str(data.get("description", data["id"])), spec, condition)


def parse_protocol_rules(data: Any) -> ProtocolRules:
    """Build protocol rules from a parsed YAML document.

    Raises:
        ProtocolRulesError: On an unknown scenario or a malformed rule.
    """
    if not isinstance(data, dict) or not isinstance(data.get("scenarios"), dict):
        raise ProtocolRulesError("rules file needs a 'scenarios' mapping")
    scenarios = []
    for name, body in data["scenarios"].items():
        try:
            scenario = ScenarioType(name)
        except ValueError as e:
            raise ProtocolRulesError(f"unknown scenario {name!r}") from e
        body = body or {}
        elig = body.get("eligibility") or {}
        unknown = set(elig) - {"chief_complaint", "physical_finding", "entity_any_of"}
        if unknown:
            raise ProtocolRulesError(f"{name}: unknown eligibility keys {sorted(unknown)}")
        eligibility = Eligibility(
            chief_complaints=_string_set(elig.get("chief_complaint", []), name),
            physical_findings=_string_set(elig.get("physical_finding", []), name),
            entity_any_of=_entity_set(elig.get("entity_any_of", []), name),
        )
        actions = tuple(
            _parse_action(a, f"{name}.actions[{i}]")
            for i, a in enumerate(body.get("actions") or [])
        )
        if len({a.action_id for a in actions}) != len(actions):
            raise ProtocolRulesError(f"{name}: duplicate action ids")
        scenarios.append(ScenarioRules(scenario, eligibility, actions))
    return ProtocolRules(tuple(scenarios))


def load_protocol_rules(path: Path | str) -> ProtocolRules:
    """Load protocol rules from a YAML file.

    Raises:
        ProtocolRulesError: If the file is not valid YAML or a rule is malformed.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ProtocolRulesError(f"Failed to parse rules file {path}: {e}") from e
    rules = parse_protocol_rules(data)
    logging.debug(f"Loaded {len(rules.scenarios)} scenarios from {path}")
    return rules


def default_protocol_rules() -> ProtocolRules:
    """The packaged protocol table."""
    source = resources.files("ems_audit") / "data" / "default_protocols.yaml"
    with source.open("r", encoding="utf-8") as f:
        return parse_protocol_rules(yaml.safe_load(f))


# ============================================================================
# CASE EVALUATION
# ============================================================================


@dataclass(frozen=True)
class ActionVerdict:
    action_id: str
    description: str
    required: bool
    status: VerdictStatus

    @property
    def passed(self) -> Optional[bool]:
        """Pass/fail for required actions, None otherwise."""
        if not self.required:
            return None
        return self.status is VerdictStatus.PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "action_id": self.action_id,
            "description": self.description,
            "required": self.required,
            "status": self.status.value,
        }


@dataclass(frozen=True)
class AuditResult:
    incident_id: str
    provider_id: str
    scenario: ScenarioType
    verdicts: Tuple[ActionVerdict, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "incident_id": self.incident_id,
            "provider_id": self.provider_id,
            "scenario": self.scenario.value,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }


def _entity_types(entities: Iterable[EntitySpan]) -> FrozenSet[EntityType]:
    return frozenset(span.entity for span in entities)


def determine_scenarios(
    rec: CaseRecord,
    entities: Sequence[EntitySpan],
    rules: Optional[ProtocolRules] = None,
) -> List[ScenarioType]:
    """Scenarios the case is eligible for, in rules order."""
    rules = rules or default_protocol_rules()
    found = _entity_types(entities)
    return [s.scenario for s in rules.scenarios if s.eligibility.matches(rec, found)]


def _verdict(rule: ActionRule, rec: CaseRecord, found: FrozenSet[EntityType]) -> ActionVerdict:
    if rule.condition is not None:
        applies = rule.condition.holds(rec.systolic_bp)
        if applies is None:
            status = VerdictStatus.INDETERMINATE
            return ActionVerdict(rule.action_id, rule.description, False, status)
        if not applies:
            status = VerdictStatus.NOT_REQUIRED
            return ActionVerdict(rule.action_id, rule.description, False, status)
    status = VerdictStatus.PASS if rule.evidence.satisfied(rec, found) else VerdictStatus.FAIL
    return ActionVerdict(rule.action_id, rule.description, True, status)


def evaluate_case(
    rec: CaseRecord,
    entities: Sequence[EntitySpan],
    rules: Optional[ProtocolRules] = None,
) -> List[AuditResult]:
    """One audit result per scenario the case is eligible for.

    Only entity types matter; span positions are ignored.
    """
    rules = rules or default_protocol_rules()
    found = _entity_types(entities)
    results = []
    for scenario in determine_scenarios(rec, entities, rules):
        verdicts = tuple(_verdict(a, rec, found) for a in rules.for_scenario(scenario).actions)
        results.append(AuditResult(rec.incident_id, rec.provider_id, scenario, verdicts))
    return results


def audit_cases(
    records: Sequence[CaseRecord],
    entities_by_id: Dict[str, Sequence[EntitySpan]],
    rules: Optional[ProtocolRules] = None,
) -> List[AuditResult]:
    """Evaluate every record; records without extracted entities use none."""
    rules = rules or default_protocol_rules()
    results = []
    for rec in records:
        results.extend(evaluate_case(rec, entities_by_id.get(rec.incident_id, ()), rules))
    logging.info(f"Audited {len(records)} cases: {len(results)} scenario results")
    return results


# ============================================================================
# AGGREGATION
# ============================================================================


@dataclass(frozen=True)
class ActionFrequency:
    """Passes over required instances of one action; frequency None when nothing was required."""

    group: str
    scenario: ScenarioType
    action_id: str
    passes: int
    required: int
    indeterminate: int = 0

    @property
    def frequency(self) -> Optional[float]:
        return self.passes / self.required if self.required else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "group": self.group,
            "scenario": self.scenario.value,
            "action_id": self.action_id,
            "passes": self.passes,
            "required": self.required,
            "indeterminate": self.indeterminate,
            "frequency": self.frequency,
        }


@dataclass
class AuditReport:
    level: str
    cases: List[AuditResult] = field(default_factory=list)
    frequencies: List[ActionFrequency] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"level": self.level}
        if self.level == "case":
            data["cases"] = [r.to_dict() for r in self.cases]
        else:
            data["frequencies"] = [f.to_dict() for f in self.frequencies]
        return data


SYSTEM_GROUP = "ALL"


def aggregate(results: Sequence[AuditResult], level: str = "system") -> AuditReport:
    """Summarize audit results at the case, provider or system level.

    Raises:
        ValueError: On an unknown level.
    """
    if level not in AUDIT_LEVELS:
        raise ValueError(f"unknown audit level {level!r}; expected one of {AUDIT_LEVELS}")
    if level == "case":
        return AuditReport(level, cases=list(results))

    tallies: "OrderedDict[Tuple[str, ScenarioType, str], List[int]]" = OrderedDict()
    for result in results:
        group = result.provider_id if level == "provider" else SYSTEM_GROUP
        for verdict in result.verdicts:
            tally = tallies.setdefault((group, result.scenario, verdict.action_id), [0, 0, 0])
            if verdict.required:
                tally[1] += 1
                tally[0] += verdict.status is VerdictStatus.PASS
            elif verdict.status is VerdictStatus.INDETERMINATE:
                tally[2] += 1

    frequencies = [
        ActionFrequency(group, scenario, action_id, passes, required, indeterminate)
        for (group, scenario, action_id), (passes, required, indeterminate) in sorted(
            tallies.items(), key=lambda kv: (kv[0][0], _scenario_rank(kv[0][1]))
        )
    ]
    return AuditReport(level, frequencies=frequencies)


def _scenario_rank(scenario: ScenarioType) -> int:
    return list(ScenarioType).index(scenario)

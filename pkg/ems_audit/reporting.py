"""
Report rendering.

Evaluation, audit and corpus statistics reports render as plain-text tables
(tabulate), JSON documents, or, for evaluation and audit reports, HTML pages
from the Jinja2 templates in ``ems_audit/templates``. Metrics are printed to
three decimals; JSON keeps full precision.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from jinja2 import Environment, FileSystemLoader
from tabulate import tabulate

from .artifacts import atomic_write_text
from .audit import AuditReport
from .corpus_stats import EntityStatistics
from .entities import qualified_tag
from .evaluation import EvaluationReport

REPORT_FORMATS = ("text", "json", "html")
NOT_AVAILABLE = "N/A"

_TEMPLATE_DIR = Path(__file__).parent / "templates"


def _fmt(value: Optional[float]) -> str:
    return NOT_AVAILABLE if value is None else f"{value:.3f}"


def _environment() -> Environment:
    env = Environment(loader=FileSystemLoader(_TEMPLATE_DIR), autoescape=True)
    env.filters["metric"] = _fmt
    env.filters["qualified_tag"] = qualified_tag
    return env


def _check_format(fmt: str) -> None:
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")


# ============================================================================
# EVALUATION
# ============================================================================


def muc_table(report: EvaluationReport) -> str:
    """Entity-level MUC-5 table, one row per evaluation mode."""
    rows = []
    for mode, scores in report.entity.items():
        c = scores.counts
        counts = [c.COR, c.INC, c.PAR, c.MIS, c.SPU, scores.POS, scores.ACT]
        metrics = [_fmt(scores.precision), _fmt(scores.recall), _fmt(scores.f1)]
        rows.append([mode, *counts, *metrics])
    headers = ["mode", "COR", "INC", "PAR", "MIS", "SPU", "POS", "ACT", "P", "R", "F1"]
    return tabulate(rows, headers=headers, tablefmt="github")


def token_table(report: EvaluationReport) -> str:
    """Token-level per-tag metrics followed by the weighted average row."""
    token = report.token
    rows = [
        [qualified_tag(c.tag), _fmt(c.precision), _fmt(c.recall), _fmt(c.f1), c.support]
        for c in token.classes
    ]
    weighted = [token.weighted_precision, token.weighted_recall, token.weighted_f1]
    rows.append(["weighted avg", *(_fmt(v) for v in weighted), token.support])
    headers = ["tag", "precision", "recall", "f1", "support"]
    return tabulate(rows, headers=headers, tablefmt="github")


def render_evaluation_report(
    report: EvaluationReport, fmt: str = "text", include_errors: bool = False
) -> str:
    _check_format(fmt)
    if fmt == "json":
        return json.dumps(report.to_dict(include_errors), indent=2) + "\n"
    if fmt == "html":
        return _environment().get_template("evaluation_report.html.j2").render(
            report=report, errors=report.to_dict(include_errors=True)["errors"]
        )
    sections = [
        f"Documents: {report.documents}",
        "",
        "Entity level (MUC-5)",
        muc_table(report),
        "",
        "Token level",
        token_table(report),
    ]
    return "\n".join(sections) + "\n"


# ============================================================================
# AUDIT
# ============================================================================


def _audit_rows(report: AuditReport) -> List[List[Any]]:
    if report.level == "case":
        return [
            [r.incident_id, r.provider_id, r.scenario.value, v.action_id, v.status.value]
            for r in report.cases
            for v in r.verdicts
        ]
    return [
        [
            f.group,
            f.scenario.value,
            f.action_id,
            f.passes,
            f.required,
            f.indeterminate,
            _fmt(f.frequency),
        ]
        for f in report.frequencies
    ]


def _audit_headers(report: AuditReport) -> List[str]:
    if report.level == "case":
        return ["incident", "provider", "scenario", "action", "verdict"]
    group = "provider" if report.level == "provider" else "group"
    return [group, "scenario", "action", "passes", "required", "indeterminate", "frequency"]


def render_audit_report(report: AuditReport, fmt: str = "text") -> str:
    """Render an audit report as a text table, JSON or HTML.

    Frequencies for actions that were never required print as ``N/A``.
    """
    _check_format(fmt)
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    headers = _audit_headers(report)
    rows = _audit_rows(report)
    if fmt == "html":
        return _environment().get_template("audit_report.html.j2").render(
            report=report, headers=headers, rows=rows
        )
    title = f"Audit report ({report.level} level)"
    return title + "\n" + tabulate(rows, headers=headers, tablefmt="github") + "\n"


# ============================================================================
# CORPUS STATISTICS
# ============================================================================


def render_entity_statistics(stats: EntityStatistics, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(stats.to_dict(), indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"statistics render as text or json, not {fmt!r}")
    rows = [
        [
            r.entity.category.value,
            r.entity.value,
            r.mentions,
            f"{100 * r.share:.1f}%",
            r.tokens,
            "NA" if r.avg_tokens is None else f"{r.avg_tokens:.2f}",
        ]
        for r in stats.rows
    ]
    entity_tokens = f"{stats.entity_tokens} ({100 * stats.entity_token_fraction:.2f}%)"
    rows.append(["Total", "", stats.total_mentions, "100%", entity_tokens, ""])
    table = tabulate(
        rows,
        headers=["category", "entity", "entities", "% of total", "tokens", "avg tokens"],
        tablefmt="github",
    )
    summary = (
        f"Documents: {stats.documents}  Words: {stats.total_tokens}  "
        f"Unique words: {stats.unique_tokens}"
    )
    return summary + "\n" + table + "\n"


def write_report(text: str, path: Path | str) -> Path:
    written = atomic_write_text(path, text)
    logging.info(f"Report saved to: {path}")
    return written

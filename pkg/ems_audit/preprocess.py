"""
Report text normalization and whitespace tokenization.

Reports are lowercased, every character that is not a letter, a digit or
``%`` becomes a space, and runs of whitespace collapse. Symbols are replaced
rather than deleted so that ``c/o`` becomes ``c o`` and ``0.4mg`` becomes
``0 4mg``. No spelling correction is attempted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

KEPT_SYMBOLS = "%"

_WHITESPACE = re.compile(r"\s+")


@dataclass(frozen=True)
class TokenizedSentence:
    """A normalized report as an ordered token sequence."""

    tokens: Tuple[str, ...]
    source_incident: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


def _keep(ch: str, kept: str) -> bool:
    return ch.isalpha() or ch.isdigit() or ch in kept


def normalize(text: str, extra_kept_symbols: str = "") -> str:
    """Lowercase ``text`` and replace symbols with spaces.

    Args:
        text: Raw report text.
        extra_kept_symbols: Symbols retained in addition to ``%``. Passing
            ``"&"`` reproduces reports where ``a&e`` survives preprocessing.

    Returns:
        The normalized string: tokens over letters, digits and kept symbols
        separated by single spaces, without leading or trailing space.
    """
    kept = KEPT_SYMBOLS + extra_kept_symbols
    lowered = text.lower()
    replaced = "".join(ch if _keep(ch, kept) else " " for ch in lowered)
    return _WHITESPACE.sub(" ", replaced).strip()


def tokenize(text: str, source_incident: str = "") -> TokenizedSentence:
    """Split already-normalized text into maximal non-space runs."""
    return TokenizedSentence(tokens=tuple(text.split()), source_incident=source_incident)


def preprocess_row(row: Dict[str, Any], extra_kept_symbols: str = "") -> Dict[str, Any]:
    """Return a copy of a record row with a ``tokens`` array added."""
    sentence = tokenize(
        normalize(row.get("report_text") or "", extra_kept_symbols),
        source_incident=row.get("incident_id", ""),
    )
    return {**row, "tokens": list(sentence.tokens)}


def preprocess_rows(
    rows: List[Dict[str, Any]], extra_kept_symbols: str = ""
) -> List[Dict[str, Any]]:
    return [preprocess_row(row, extra_kept_symbols) for row in rows]

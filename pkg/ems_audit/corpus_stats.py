"""
Corpus statistics for labelled sentence sets.

Per entity type: the number of mentions, their share of all mentions, the
number of tokens inside those mentions and the average tokens per mention
(None when the type never occurs). Totals include the fraction of all tokens
that belong to an entity, plus total and unique word counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from .entities import EntityType, LabelledSentence


@dataclass(frozen=True)
class EntityRow:
    entity: EntityType
    mentions: int
    share: float
    tokens: int

    @property
    def avg_tokens(self) -> Optional[float]:
        return self.tokens / self.mentions if self.mentions else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entity": self.entity.value,
            "category": self.entity.category.value,
            "label": self.entity.qualified_name,
            "mentions": self.mentions,
            "share": self.share,
            "tokens": self.tokens,
            "avg_tokens": self.avg_tokens,
        }


@dataclass
class EntityStatistics:
    rows: List[EntityRow] = field(default_factory=list)
    total_mentions: int = 0
    entity_tokens: int = 0
    total_tokens: int = 0
    unique_tokens: int = 0
    documents: int = 0

    @property
    def entity_token_fraction(self) -> float:
        return self.entity_tokens / self.total_tokens if self.total_tokens else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "documents": self.documents,
            "entities": [r.to_dict() for r in self.rows],
            "total_mentions": self.total_mentions,
            "entity_tokens": self.entity_tokens,
            "entity_token_fraction": self.entity_token_fraction,
            "total_words": self.total_tokens,
            "unique_words": self.unique_tokens,
        }


def vocabulary_statistics(sentences: Sequence[LabelledSentence]) -> Dict[str, int]:
    words = [t for s in sentences for t in s.tokens]
    return {"total_words": len(words), "unique_words": len(set(words))}


def entity_statistics(sentences: Sequence[LabelledSentence]) -> EntityStatistics:
    mentions = {e: 0 for e in EntityType}
    tokens = {e: 0 for e in EntityType}
    for sentence in sentences:
        for span in sentence.spans():
            mentions[span.entity] += 1
            tokens[span.entity] += span.length

    stats = EntityStatistics(documents=len(sentences))
    stats.total_mentions = sum(mentions.values())
    stats.entity_tokens = sum(tokens.values())
    vocab = vocabulary_statistics(sentences)
    stats.total_tokens = vocab["total_words"]
    stats.unique_tokens = vocab["unique_words"]
    for entity in EntityType:
        share = mentions[entity] / stats.total_mentions if stats.total_mentions else 0.0
        stats.rows.append(EntityRow(entity, mentions[entity], share, tokens[entity]))
    return stats

"""
EMS Audit - weakly supervised clinical audit of ambulance case reports.

The package turns free-text ambulance case reports into protocol compliance
measures:

    records -> preprocess -> gazetteer weak labels -> BiLSTM-CRF tagger
            -> MUC-5 evaluation -> rule-based protocol audit

Modules:
- records: case record ingest, encounter filtering and dataset splits
- preprocess: text normalization and tokenization
- entities: the entity inventory and IOB2 tag helpers
- gazetteer: synonym lists, fuzzy matching and weak labelling
- crf / tagger / training: numpy BiLSTM-CRF with manual gradients and Adam
- evaluation: MUC-5 entity scores and token-level metrics
- audit: protocol rules and case/provider/system compliance
- synth: synthetic corpus generation with exact gold annotations
- pipeline / cli: stage orchestration and the ``ems-audit`` command
"""

__version__ = "0.1.0"

from .entities import NUM_TAGS, TAGS, EntityCategory, EntitySpan, EntityType, LabelledSentence
from .errors import (
    CheckpointError,
    EmptyTrainingSetError,
    EmsAuditError,
    GazetteerError,
    ProtocolRulesError,
    RecordParseError,
)

__all__ = [
    "__version__",
    "EntityCategory",
    "EntityType",
    "EntitySpan",
    "LabelledSentence",
    "TAGS",
    "NUM_TAGS",
    "EmsAuditError",
    "RecordParseError",
    "GazetteerError",
    "ProtocolRulesError",
    "EmptyTrainingSetError",
    "CheckpointError",
]

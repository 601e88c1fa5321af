"""
Pipeline stages over artifact files.

Each stage reads its inputs from JSONL files, writes its outputs atomically
and returns what it produced, so stages can run one at a time from the CLI or
chained by ``run_pipeline``:

    gen -> preprocess -> label -> split -> train -> predict -> eval -> audit

Row layout: every stage keeps the columns it was given and adds its own
(``tokens`` after preprocessing, ``tags`` after labelling or prediction).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .artifacts import read_jsonl, write_json, write_jsonl
from .audit import AUDIT_LEVELS, AuditReport, ProtocolRules, aggregate, audit_cases
from .corpus_stats import EntityStatistics, entity_statistics
from .entities import LabelledSentence
from .errors import EmptyTrainingSetError
from .evaluation import EvaluationReport, evaluate_documents
from .gazetteer import (
    Gazetteer,
    TagPatch,
    apply_overrides,
    derive_overrides,
    label_rows,
    load_overrides,
)
from .preprocess import normalize, preprocess_rows
from .records import (
    filter_encounters,
    load_record_rows,
    load_records,
    split_dataset,
    write_split,
)
from .reporting import render_audit_report, render_evaluation_report, write_report
from .synth import SynthConfig, generate_corpus, write_corpus
from .tagger import Hyperparams, TaggerModel, load_checkpoint, predict_batch, save_checkpoint
from .training import TrainingLog, train, write_training_log


def read_labelled(path: Path | str) -> List[LabelledSentence]:
    """Read rows carrying ``tokens`` and ``tags`` as labelled sentences."""
    return [LabelledSentence.from_dict(row) for row in read_jsonl(path)]


# ============================================================================
# STAGES
# ============================================================================


def run_gen(
    cfg: SynthConfig,
    records_path: Path,
    gold_path: Path,
    gaz: Optional[Gazetteer] = None,
    show_progress: bool = False,
) -> int:
    cases = generate_corpus(cfg, gaz, show_progress=show_progress)
    write_corpus(cases, records_path, gold_path)
    return len(cases)


def run_preprocess(input_path: Path, output_path: Path, extra_kept_symbols: str = "") -> int:
    """Validate, filter and tokenize records; returns the number written.

    Malformed and duplicate lines are logged and skipped. Accepted rows keep
    their original columns.
    """
    loaded = load_record_rows(input_path)
    kept = {r.incident_id for r in filter_encounters(loaded.records)}
    rows = [row for record, row in zip(loaded.records, loaded.rows) if record.incident_id in kept]
    write_jsonl(output_path, preprocess_rows(rows, extra_kept_symbols))
    return len(rows)


def run_label(
    input_path: Path,
    output_path: Path,
    gaz: Gazetteer,
    overrides_path: Optional[Path] = None,
    show_progress: bool = False,
) -> int:
    """Weakly label tokenized rows, then apply correction patches if given."""
    rows = read_jsonl(input_path)
    missing = [r.get("incident_id") for r in rows if "tokens" not in r]
    if missing:
        raise ValueError(f"{input_path}: {len(missing)} rows have no tokens; run preprocess first")
    labelled = label_rows(rows, gaz, show_progress=show_progress)
    if overrides_path is not None:
        patched = apply_overrides(
            [LabelledSentence.from_dict(r) for r in labelled], load_overrides(overrides_path)
        )
        tags_by_id = {s.incident_id: list(s.tags) for s in patched}
        labelled = [{**r, "tags": tags_by_id[r["incident_id"]]} for r in labelled]
    write_jsonl(output_path, labelled)
    return len(labelled)


def run_split(
    input_path: Path, output_dir: Path, fractions: Sequence[float], seed: int
) -> Dict[str, Path]:
    loaded = load_record_rows(input_path)
    split = split_dataset(loaded.records, fractions, seed)
    rows_by_id = {r.incident_id: row for r, row in zip(loaded.records, loaded.rows)}
    return write_split(split, rows_by_id, output_dir)


def run_train(
    train_path: Path,
    dev_path: Optional[Path],
    model_path: Path,
    hp: Hyperparams,
    log_path: Optional[Path] = None,
    show_progress: bool = False,
) -> tuple[TaggerModel, TrainingLog]:
    train_set = read_labelled(train_path)
    if not train_set:
        raise EmptyTrainingSetError()
    dev_set = read_labelled(dev_path) if dev_path is not None else []
    model, log = train(train_set, dev_set, hp, show_progress=show_progress)
    save_checkpoint(model, model_path)
    if log_path is not None:
        write_training_log(log, log_path)
    return model, log


def run_predict(
    model_path: Path, input_path: Path, output_path: Path, extra_kept_symbols: str = ""
) -> int:
    """Tag every row; rows without ``tokens`` are tokenized from ``report_text``."""
    model = load_checkpoint(model_path)
    rows = read_jsonl(input_path)
    sentences = [
        row["tokens"]
        if "tokens" in row
        else normalize(row.get("report_text") or "", extra_kept_symbols).split()
        for row in rows
    ]
    tags = predict_batch(model, sentences)
    out = [
        {"incident_id": row.get("incident_id", ""), "tokens": list(toks), "tags": row_tags}
        for row, toks, row_tags in zip(rows, sentences, tags)
    ]
    write_jsonl(output_path, out)
    logging.info(f"Tagged {len(out)} reports")
    return len(out)


def run_eval(
    gold_path: Path,
    pred_path: Path,
    modes: Sequence[str] = ("strict", "type"),
) -> EvaluationReport:
    return evaluate_documents(read_labelled(gold_path), read_labelled(pred_path), modes)


def run_audit(
    records_path: Path,
    pred_path: Path,
    rules: ProtocolRules,
    levels: Sequence[str] = AUDIT_LEVELS,
) -> Dict[str, AuditReport]:
    """Audit records against entities predicted for their reports.

    Records without a patient encounter are skipped.
    """
    records = filter_encounters(load_records(records_path))
    entities = {s.incident_id: s.spans() for s in read_labelled(pred_path)}
    unmatched = sum(1 for r in records if r.incident_id not in entities)
    if unmatched:
        logging.warning(f"{unmatched} records have no predictions and are audited without entities")
    results = audit_cases(records, entities, rules)
    return {level: aggregate(results, level) for level in levels}


def run_stats(input_path: Path) -> EntityStatistics:
    return entity_statistics(read_labelled(input_path))


# ============================================================================
# FULL PIPELINE
# ============================================================================


@dataclass
class PipelineResult:
    artifacts: Dict[str, Path] = field(default_factory=dict)
    evaluation: Optional[EvaluationReport] = None
    audit: Dict[str, AuditReport] = field(default_factory=dict)
    training_log: Optional[TrainingLog] = None


def verify_split(
    weak_path: Path, gold: Sequence[LabelledSentence], overrides_path: Path
) -> List[TagPatch]:
    """Replace weak labels of a split with verified labels through patches.

    Writes the patch file and rewrites ``weak_path`` with the patched tags.
    """
    rows = read_jsonl(weak_path)
    weak = [LabelledSentence.from_dict(r) for r in rows]
    patches = derive_overrides(weak, gold)
    write_jsonl(overrides_path, (p.to_dict() for p in patches))
    patched = {s.incident_id: list(s.tags) for s in apply_overrides(weak, patches)}
    write_jsonl(weak_path, ({**r, "tags": patched[r["incident_id"]]} for r in rows))
    logging.info(f"{weak_path.name}: {len(patches)} tag corrections")
    return patches


def run_pipeline(
    config: Any,
    gaz: Gazetteer,
    rules: ProtocolRules,
    show_progress: bool = False,
) -> PipelineResult:
    """Run every stage in a work directory.

    Without a records path in the configuration a synthetic corpus is
    generated first and its construction gold stands in for clinician review
    of the dev and test splits.

    Args:
        config: A ``config.PipelineConfig``.
        gaz: Gazetteer for weak labelling.
        rules: Protocol rules for the audit.
        show_progress: Show tqdm bars for long stages.
    """
    paths = config.paths
    work = paths.work_dir
    work.mkdir(parents=True, exist_ok=True)
    result = PipelineResult()
    art = result.artifacts

    gold_path = paths.gold
    if paths.records is None:
        art["records"] = work / "records.jsonl"
        gold_path = work / "gold.jsonl"
        run_gen(config.synth, art["records"], gold_path, gaz, show_progress)
    else:
        art["records"] = paths.records
    if gold_path is not None:
        art["gold"] = gold_path

    art["preprocessed"] = work / "preprocessed.jsonl"
    run_preprocess(art["records"], art["preprocessed"], config.extra_kept_symbols)
    art["labelled"] = work / "labelled.jsonl"
    run_label(art["preprocessed"], art["labelled"], gaz, paths.overrides, show_progress)

    split_paths = run_split(art["labelled"], work / "split", config.split_fractions, config.seed)
    art.update({f"split_{name}": p for name, p in split_paths.items()})

    if gold_path is not None:
        gold = read_labelled(gold_path)
        for name in ("dev", "test"):
            art[f"overrides_{name}"] = work / f"overrides_{name}.jsonl"
            verify_split(split_paths[name], gold, art[f"overrides_{name}"])

    art["model"] = paths.model_path
    art["training_log"] = work / "training_log.csv"
    _, result.training_log = run_train(
        split_paths["train"],
        split_paths["dev"],
        art["model"],
        config.hyperparams,
        art["training_log"],
        show_progress,
    )

    art["predictions"] = work / "predictions.jsonl"
    run_predict(art["model"], split_paths["test"], art["predictions"])

    result.evaluation = run_eval(split_paths["test"], art["predictions"])
    art["eval_text"] = write_report(
        render_evaluation_report(result.evaluation, "text"), work / "eval_report.txt"
    )
    art["eval_json"] = write_json(work / "eval_report.json", result.evaluation.to_dict(True))

    result.audit = run_audit(split_paths["test"], art["predictions"], rules)
    for level, report in result.audit.items():
        art[f"audit_{level}"] = write_report(
            render_audit_report(report, "json"), work / f"audit_{level}.json"
        )
        write_report(render_audit_report(report, "text"), work / f"audit_{level}.txt")
    return result

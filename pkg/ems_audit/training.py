"""
Tagger training: Adam on mini-batches with early stopping on dev loss.

Each epoch shuffles the training sentences with the seeded generator, cuts
them into batches of ``batch_size`` (the last one may be short) and, within a
batch, runs sentences of the same length together. The batch loss is the
mean per-sentence negative log-likelihood, and each batch makes one Adam
step.

After every epoch the mean per-sentence dev NLL is recorded. Training stops
once it has not strictly decreased for ``patience`` consecutive epochs, or at
``max_epochs``, and the parameters of the best epoch are returned.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .artifacts import atomic_write_text
from .entities import LabelledSentence
from .errors import EmptyTrainingSetError
from .tagger import (
    Hyperparams,
    TaggerModel,
    Vocabulary,
    batch_loss_and_grad,
    batch_losses,
    init_model,
    tag_ids,
)

# (model, epoch) -> dev loss; replaces the dev-set evaluation when given
EvaluateFn = Callable[[TaggerModel, int], float]

LOG_COLUMNS = ("epoch", "train_loss", "dev_loss", "elapsed_ms")


class Adam:
    """Adam optimizer over a dict of parameter arrays, updated in place."""

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        learning_rate: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for name, grad in grads.items():
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad**2
            update = self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            params[name] -= update


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    elapsed_ms: float


@dataclass
class TrainingLog:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_dev_loss(self) -> float:
        if not self.best_epoch:
            return math.inf
        return self.epochs[self.best_epoch - 1].dev_loss

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for record in self.epochs:
            writer.writerow(
                [
                    record.epoch,
                    f"{record.train_loss:.6f}",
                    f"{record.dev_loss:.6f}",
                    f"{record.elapsed_ms:.1f}",
                ]
            )
        return buffer.getvalue()


def write_training_log(log: TrainingLog, path: Path | str) -> Path:
    """Write the per-epoch log as CSV."""
    return atomic_write_text(path, log.to_csv())


@dataclass
class _Encoded:
    ids: np.ndarray
    tags: np.ndarray


def _encode_set(sentences: Sequence[LabelledSentence], vocab: Vocabulary) -> List[_Encoded]:
    return [
        _Encoded(vocab.ids(s.tokens), np.asarray(tag_ids(s.tags), dtype=np.int64))
        for s in sentences
        if len(s.tokens) > 0
    ]


def _length_groups(items: Sequence[_Encoded]) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stack items of equal length, shortest group first."""
    by_length: Dict[int, List[_Encoded]] = {}
    for item in items:
        by_length.setdefault(len(item.ids), []).append(item)
    return [
        (np.stack([i.ids for i in group]), np.stack([i.tags for i in group]))
        for _, group in sorted(by_length.items())
    ]


def mean_loss(model: TaggerModel, items: Sequence[_Encoded]) -> float:
    """Mean per-sentence NLL over already-encoded sentences."""
    if not items:
        return math.nan
    total = 0.0
    for ids, tags in _length_groups(items):
        total += float(batch_losses(model, ids, tags).sum())
    return total / len(items)


def dataset_loss(model: TaggerModel, sentences: Sequence[LabelledSentence]) -> float:
    """Mean per-sentence NLL of labelled sentences under ``model``."""
    return mean_loss(model, _encode_set(sentences, model.vocab))


def _train_batch(
    model: TaggerModel, batch: Sequence[_Encoded], optimizer: Adam
) -> float:
    """One Adam step on the mean loss of ``batch``; returns the summed loss."""
    grads: Dict[str, np.ndarray] = {k: np.zeros_like(v) for k, v in model.params.items()}
    total = 0.0
    for ids, tags in _length_groups(batch):
        losses, group_grads = batch_loss_and_grad(model, ids, tags)
        total += float(losses.sum())
        for name, grad in group_grads.items():
            grads[name] += grad
    scale = 1.0 / len(batch)
    for grad in grads.values():
        grad *= scale
    optimizer.step(model.params, grads)
    return total


def train(
    train_set: Sequence[LabelledSentence],
    dev_set: Sequence[LabelledSentence],
    hp: Hyperparams = Hyperparams(),
    evaluate_fn: Optional[EvaluateFn] = None,
    show_progress: bool = False,
) -> Tuple[TaggerModel, TrainingLog]:
    """Train a tagger.

    The vocabulary is built from ``train_set`` only. When ``dev_set`` is
    empty the training loss drives early stopping instead.

    Args:
        train_set: Labelled training sentences.
        dev_set: Labelled validation sentences.
        hp: Hyperparameters (model size, optimizer, stopping rule, seed).
        evaluate_fn: Optional replacement for the dev-loss computation,
            called as ``evaluate_fn(model, epoch)`` after every epoch.
        show_progress: Show a tqdm bar over epochs.

    Returns:
        The model restored to its best epoch, and the training log.

    Raises:
        EmptyTrainingSetError: If ``train_set`` has no non-empty sentence.
    """
    vocab = Vocabulary.build(s.tokens for s in train_set)
    train_items = _encode_set(train_set, vocab)
    if not train_items:
        raise EmptyTrainingSetError()
    dev_items = _encode_set(dev_set, vocab)
    if not dev_items and evaluate_fn is None:
        logging.warning("Empty dev set: early stopping will monitor the training loss")

    model = init_model(vocab, hp)
    optimizer = Adam(model.params, hp.learning_rate)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(hp.seed).spawn(1)[0])
    logging.info(
        f"Training on {len(train_items)} sentences (dev {len(dev_items)}), "
        f"vocabulary {len(vocab)}, batch size {hp.batch_size}"
    )

    log = TrainingLog()
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_loss = math.inf
    waited = 0
    started = time.perf_counter()

    epochs = tqdm(
        range(1, hp.max_epochs + 1), desc="Training", unit="epoch", disable=not show_progress
    )
    for epoch in epochs:
        order = shuffle_rng.permutation(len(train_items))
        train_total = 0.0
        for offset in range(0, len(order), hp.batch_size):
            batch = [train_items[i] for i in order[offset : offset + hp.batch_size]]
            train_total += _train_batch(model, batch, optimizer)
        train_loss = train_total / len(train_items)

        if evaluate_fn is not None:
            dev_loss = float(evaluate_fn(model, epoch))
        elif dev_items:
            dev_loss = mean_loss(model, dev_items)
        else:
            dev_loss = train_loss

        elapsed_ms = (time.perf_counter() - started) * 1000.0
        log.epochs.append(EpochRecord(epoch, train_loss, dev_loss, elapsed_ms))

        if dev_loss < best_loss:
            best_loss = dev_loss
            best_params = {k: v.copy() for k, v in model.params.items()}
            log.best_epoch = epoch
            waited = 0
        else:
            waited += 1
        logging.info(
            f"Epoch {epoch}: train {train_loss:.4f}, dev {dev_loss:.4f} "
            f"(best epoch {log.best_epoch}, patience {waited}/{hp.patience})"
        )
        epochs.set_postfix(train=f"{train_loss:.3f}", dev=f"{dev_loss:.3f}")
        if waited >= hp.patience:
            log.stopped_early = True
            logging.info(f"Early stopping after epoch {epoch}")
            break

    model.params = best_params
    logging.info(f"Restored parameters from epoch {log.best_epoch} (dev loss {best_loss:.4f})")
    return model, log

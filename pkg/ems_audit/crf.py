"""
Linear-chain conditional random field over per-token tag scores.

Transitions are a ``(K+2) x (K+2)`` matrix indexed ``[from, to]`` with two
virtual states: ``START = K`` and ``STOP = K + 1``. Entries into START and out
of STOP are ``-inf`` and never read; every computation slices
``trans[:K, :K]``, ``trans[START, :K]`` and ``trans[:K, STOP]``.

The batched functions take emissions of shape ``(B, T, K)`` for B sentences
of equal length T. The single-sentence functions take ``(T, K)``.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np
from scipy.special import logsumexp


def start_index(trans: np.ndarray) -> int:
    return trans.shape[0] - 2


def stop_index(trans: np.ndarray) -> int:
    return trans.shape[0] - 1


def init_transitions(num_tags: int) -> np.ndarray:
    """Zero transition scores with the unreachable entries set to ``-inf``."""
    trans = np.zeros((num_tags + 2, num_tags + 2), dtype=np.float64)
    trans[:, num_tags] = -np.inf
    trans[num_tags + 1, :] = -np.inf
    return trans


def _split(trans: np.ndarray, num_tags: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if trans.shape != (num_tags + 2, num_tags + 2):
        raise ValueError(
            f"transitions of shape {trans.shape} do not fit {num_tags} tags"
        )
    start, stop = num_tags, num_tags + 1
    return trans[:num_tags, :num_tags], trans[start, :num_tags], trans[:num_tags, stop]


def _check_batch(em: np.ndarray) -> None:
    if em.ndim != 3 or em.shape[1] == 0:
        raise ValueError(f"expected emissions of shape (B, T>=1, K), got {em.shape}")


# ============================================================================
# BATCHED
# ============================================================================


def batch_path_score(em: np.ndarray, trans: np.ndarray, tags: np.ndarray) -> np.ndarray:
    """Scores of the given tag paths, shape ``(B,)``."""
    _check_batch(em)
    B, T, K = em.shape
    inner, from_start, to_stop = _split(trans, K)
    rows = np.arange(B)[:, None]
    score = em[rows, np.arange(T)[None, :], tags].sum(axis=1)
    score += from_start[tags[:, 0]] + to_stop[tags[:, -1]]
    if T > 1:
        score += inner[tags[:, :-1], tags[:, 1:]].sum(axis=1)
    return score


def forward_scores(em: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Log forward variables ``alpha[b, t, k]``: all prefixes ending in tag k at t."""
    _check_batch(em)
    B, T, K = em.shape
    inner, from_start, _ = _split(trans, K)
    alpha = np.empty((B, T, K), dtype=np.float64)
    alpha[:, 0] = from_start[None, :] + em[:, 0]
    for t in range(1, T):
        alpha[:, t] = logsumexp(alpha[:, t - 1, :, None] + inner[None], axis=1) + em[:, t]
    return alpha


def backward_scores(em: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Log backward variables ``beta[b, t, k]``: all suffixes after tag k at t."""
    _check_batch(em)
    B, T, K = em.shape
    inner, _, to_stop = _split(trans, K)
    beta = np.empty((B, T, K), dtype=np.float64)
    beta[:, T - 1] = to_stop[None, :]
    for t in range(T - 2, -1, -1):
        beta[:, t] = logsumexp(inner[None] + (em[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
    return beta


def batch_log_partition(em: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """Log normalizers, shape ``(B,)``."""
    alpha = forward_scores(em, trans)
    _, _, to_stop = _split(trans, em.shape[2])
    return logsumexp(alpha[:, -1] + to_stop[None, :], axis=1)


def batch_viterbi(em: np.ndarray, trans: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Best tag paths ``(B, T)`` and their scores ``(B,)``."""
    _check_batch(em)
    B, T, K = em.shape
    inner, from_start, to_stop = _split(trans, K)
    backpointers = np.zeros((B, T, K), dtype=np.int64)
    delta = from_start[None, :] + em[:, 0]
    for t in range(1, T):
        candidates = delta[:, :, None] + inner[None]
        backpointers[:, t] = np.argmax(candidates, axis=1)
        delta = np.max(candidates, axis=1) + em[:, t]
    delta = delta + to_stop[None, :]

    paths = np.empty((B, T), dtype=np.int64)
    paths[:, -1] = np.argmax(delta, axis=1)
    rows = np.arange(B)
    for t in range(T - 1, 0, -1):
        paths[:, t - 1] = backpointers[rows, t, paths[:, t]]
    return paths, delta[rows, paths[:, -1]]


def batch_nll_and_grad(
    em: np.ndarray, trans: np.ndarray, tags: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sentence negative log-likelihood and its gradients.

    Returns:
        ``(losses (B,), d_em (B, T, K), d_trans (K+2, K+2))``. The gradients
        are of the summed loss; unreachable transition entries get 0.
    """
    _check_batch(em)
    B, T, K = em.shape
    inner, _, _ = _split(trans, K)
    alpha = forward_scores(em, trans)
    beta = backward_scores(em, trans)
    _, _, to_stop = _split(trans, K)
    log_z = logsumexp(alpha[:, -1] + to_stop[None, :], axis=1)
    losses = log_z - batch_path_score(em, trans, tags)

    unary = np.exp(alpha + beta - log_z[:, None, None])
    gold = np.zeros((B, T, K), dtype=np.float64)
    np.put_along_axis(gold, tags[:, :, None], 1.0, axis=2)
    d_em = unary - gold

    d_trans = np.zeros_like(trans)
    start, stop = K, K + 1
    d_trans[start, :K] = (unary[:, 0] - gold[:, 0]).sum(axis=0)
    d_trans[:K, stop] = (unary[:, -1] - gold[:, -1]).sum(axis=0)
    if T > 1:
        pairwise = np.exp(
            alpha[:, :-1, :, None]
            + inner[None, None]
            + (em[:, 1:] + beta[:, 1:])[:, :, None, :]
            - log_z[:, None, None, None]
        )
        d_inner = pairwise.sum(axis=(0, 1))
        np.add.at(d_inner, (tags[:, :-1].ravel(), tags[:, 1:].ravel()), -1.0)
        d_trans[:K, :K] = d_inner
    return losses, d_em, d_trans


# ============================================================================
# SINGLE SENTENCE
# ============================================================================


def _as_batch(em: np.ndarray) -> np.ndarray:
    em = np.asarray(em, dtype=np.float64)
    if em.ndim != 2 or em.shape[0] == 0:
        raise ValueError(f"expected emissions of shape (T>=1, K), got {em.shape}")
    return em[None]


def path_score(em: np.ndarray, trans: np.ndarray, tags: List[int]) -> float:
    """Score of one tag path: boundary transitions, emissions and inner transitions."""
    batch = _as_batch(em)
    if len(tags) != batch.shape[1]:
        raise ValueError(f"{len(tags)} tags for {batch.shape[1]} tokens")
    return float(batch_path_score(batch, trans, np.asarray([tags], dtype=np.int64))[0])


def log_partition(em: np.ndarray, trans: np.ndarray) -> float:
    """Log of the summed exponentiated scores of all ``K**T`` paths."""
    return float(batch_log_partition(_as_batch(em), trans)[0])


def viterbi(em: np.ndarray, trans: np.ndarray) -> Tuple[List[int], float]:
    """Highest-scoring tag path and its score."""
    paths, scores = batch_viterbi(_as_batch(em), trans)
    return [int(t) for t in paths[0]], float(scores[0])

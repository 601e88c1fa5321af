"""
BiLSTM-CRF sequence tagger implemented directly on numpy arrays.

Architecture: token embeddings feed a forward LSTM (left to right) and a
backward LSTM (right to left); their per-token hidden states are concatenated
and projected to one score per tag; a linear-chain CRF on top of those scores
gives sentence-level likelihoods and Viterbi decoding.

All parameters live in ``TaggerModel.params``, a dict keyed by the names in
``PARAM_ORDER`` (which is also the checkpoint order). Gradients are returned
in dicts with the same keys. Everything is float64.

Each LSTM keeps its four gates in one weight matrix ``W`` of shape
``(embed_dim + hidden_dim, 4 * hidden_dim)`` applied to ``[x_t, h_{t-1}]``,
gate order input, forget, candidate, output.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from . import crf
from .artifacts import atomic_write_bytes
from .entities import NUM_TAGS, TAG_TO_ID, TAGS
from .errors import CheckpointError
from .preprocess import TokenizedSentence

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

PARAM_ORDER = (
    "embeddings",
    "fwd_W",
    "fwd_b",
    "bwd_W",
    "bwd_b",
    "proj_W",
    "proj_b",
    "transitions",
)

INIT_SCALE = 0.1
FORGET_BIAS = 1.0

CHECKPOINT_MAGIC = b"EMSTAG"
CHECKPOINT_VERSION = 1
# magic, version, vocab size, embed dim, hidden dim, num tags, seed
_HEADER = struct.Struct("<6sHIIIIq")
_TOKEN_LEN = struct.Struct("<I")


@dataclass
class Vocabulary:
    """Token to id map with ``PAD=0`` and ``UNK=1`` reserved."""

    token_to_id: Dict[str, int] = field(
        default_factory=lambda: {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    )

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]]) -> "Vocabulary":
        """Vocabulary of every token in ``sentences``, in first-occurrence order."""
        vocab = cls()
        for tokens in sentences:
            for token in tokens:
                if token not in vocab.token_to_id:
                    vocab.token_to_id[token] = len(vocab.token_to_id)
        return vocab

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocabulary":
        """Rebuild from an id-ordered token list (as stored in checkpoints)."""
        if list(tokens[:2]) != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the PAD and UNK tokens")
        return cls({token: i for i, token in enumerate(tokens)})

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def tokens(self) -> List[str]:
        return sorted(self.token_to_id, key=self.token_to_id.__getitem__)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        """Map tokens to ids; out-of-vocabulary tokens become ``UNK_ID``."""
        return np.array([self.token_to_id.get(t, UNK_ID) for t in tokens], dtype=np.int64)


@dataclass(frozen=True)
class Hyperparams:
    """Model size, optimizer and stopping settings."""

    embed_dim: int = 100
    hidden_dim: int = 64
    batch_size: int = 512
    learning_rate: float = 0.001
    patience: int = 5
    max_epochs: int = 300
    seed: int = 7

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name != "seed" and not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_config(cls, config: Dict[str, Any] | None) -> "Hyperparams":
        """Build from a config mapping; unknown keys are rejected.

        Raises:
            ValueError: On an unknown key or a non-positive value.
        """
        config = dict(config or {})
        unknown = set(config) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown hyperparameters: {', '.join(sorted(unknown))}")
        if "learning_rate" in config:
            config["learning_rate"] = float(config["learning_rate"])
        for key in set(config) - {"learning_rate"}:
            config[key] = int(config[key])
        return cls(**config)


@dataclass
class TaggerModel:
    vocab: Vocabulary
    hp: Hyperparams
    params: Dict[str, np.ndarray]
    num_tags: int = NUM_TAGS

    @property
    def transitions(self) -> np.ndarray:
        return self.params["transitions"]

    def copy(self) -> "TaggerModel":
        return TaggerModel(
            self.vocab, self.hp, {k: v.copy() for k, v in self.params.items()}, self.num_tags
        )


def parameter_shapes(
    vocab_size: int, embed_dim: int, hidden_dim: int, num_tags: int
) -> Dict[str, Tuple[int, ...]]:
    lstm_in = embed_dim + hidden_dim
    return {
        "embeddings": (vocab_size, embed_dim),
        "fwd_W": (lstm_in, 4 * hidden_dim),
        "fwd_b": (4 * hidden_dim,),
        "bwd_W": (lstm_in, 4 * hidden_dim),
        "bwd_b": (4 * hidden_dim,),
        "proj_W": (2 * hidden_dim, num_tags),
        "proj_b": (num_tags,),
        "transitions": (num_tags + 2, num_tags + 2),
    }


def init_model(vocab: Vocabulary, hp: Hyperparams, num_tags: int = NUM_TAGS) -> TaggerModel:
    """Seeded initialization.

    Embeddings and transitions start at zero, LSTM and projection weights are
    uniform in ``[-0.1, 0.1]``, and each LSTM's forget-gate bias is 1.
    """
    rng = np.random.default_rng(hp.seed)
    shapes = parameter_shapes(len(vocab), hp.embed_dim, hp.hidden_dim, num_tags)
    H = hp.hidden_dim
    params = {}
    for name in PARAM_ORDER:
        shape = shapes[name]
        if name == "embeddings":
            params[name] = np.zeros(shape, dtype=np.float64)
        elif name == "transitions":
            params[name] = crf.init_transitions(num_tags)
        elif name.endswith("_b") and name != "proj_b":
            bias = np.zeros(shape, dtype=np.float64)
            bias[H : 2 * H] = FORGET_BIAS
            params[name] = bias
        else:
            params[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
    return TaggerModel(vocab, hp, params, num_tags)


def parameter_count(model: TaggerModel) -> int:
    return int(sum(p.size for p in model.params.values()))


# ============================================================================
# FORWARD AND BACKWARD PASSES
# ============================================================================


@dataclass
class _LstmCache:
    xh: np.ndarray  # (B, T, E+H) inputs to the gate matmul
    gates: np.ndarray  # (B, T, 4H) activated i, f, g, o
    c: np.ndarray  # (B, T+1, H) cell states, c[:, 0] = 0
    tanh_c: np.ndarray  # (B, T, H)


def _lstm_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, _LstmCache]:
    B, T, E = x.shape
    H = W.shape[1] // 4
    h = np.zeros((B, H))
    xh = np.empty((B, T, E + H))
    gates = np.empty((B, T, 4 * H))
    c = np.zeros((B, T + 1, H))
    tanh_c = np.empty((B, T, H))
    out = np.empty((B, T, H))
    for t in range(T):
        xh[:, t, :E] = x[:, t]
        xh[:, t, E:] = h
        z = xh[:, t] @ W + b
        gates[:, t, : 2 * H] = expit(z[:, : 2 * H])
        gates[:, t, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        gates[:, t, 3 * H :] = expit(z[:, 3 * H :])
        i, f, g, o = np.split(gates[:, t], 4, axis=1)
        c[:, t + 1] = f * c[:, t] + i * g
        tanh_c[:, t] = np.tanh(c[:, t + 1])
        h = o * tanh_c[:, t]
        out[:, t] = h
    return out, _LstmCache(xh, gates, c, tanh_c)


def _lstm_backward(
    d_out: np.ndarray, W: np.ndarray, cache: _LstmCache
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagation through time. Returns ``(d_x, d_W, d_b)``."""
    B, T, H = d_out.shape
    E = W.shape[0] - H
    d_W = np.zeros_like(W)
    d_b = np.zeros(W.shape[1])
    d_x = np.empty((B, T, E))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, g, o = np.split(cache.gates[:, t], 4, axis=1)
        tc = cache.tanh_c[:, t]
        dh = d_out[:, t] + dh_next
        dc = dh * o * (1.0 - tc**2) + dc_next
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * cache.c[:, t] * f * (1.0 - f),
                dc * i * (1.0 - g**2),
                dh * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        d_W += cache.xh[:, t].T @ dz
        d_b += dz.sum(axis=0)
        d_xh = dz @ W.T
        d_x[:, t] = d_xh[:, :E]
        dh_next = d_xh[:, E:]
        dc_next = dc * f
    return d_x, d_W, d_b


@dataclass
class _EncodeCache:
    ids: np.ndarray
    hidden: np.ndarray  # (B, T, 2H)
    fwd: _LstmCache
    bwd: _LstmCache


def _encode_batch(model: TaggerModel, ids: np.ndarray) -> Tuple[np.ndarray, _EncodeCache]:
    p = model.params
    x = p["embeddings"][ids]
    h_fwd, fwd_cache = _lstm_forward(x, p["fwd_W"], p["fwd_b"])
    h_bwd_rev, bwd_cache = _lstm_forward(x[:, ::-1], p["bwd_W"], p["bwd_b"])
    hidden = np.concatenate([h_fwd, h_bwd_rev[:, ::-1]], axis=2)
    emissions = hidden @ p["proj_W"] + p["proj_b"]
    return emissions, _EncodeCache(ids, hidden, fwd_cache, bwd_cache)


def _backward_batch(
    model: TaggerModel, d_em: np.ndarray, cache: _EncodeCache
) -> Dict[str, np.ndarray]:
    p = model.params
    H = model.hp.hidden_dim
    K = d_em.shape[2]
    grads = {
        "proj_W": cache.hidden.reshape(-1, 2 * H).T @ d_em.reshape(-1, K),
        "proj_b": d_em.sum(axis=(0, 1)),
    }
    d_hidden = d_em @ p["proj_W"].T
    d_x_fwd, grads["fwd_W"], grads["fwd_b"] = _lstm_backward(
        d_hidden[:, :, :H], p["fwd_W"], cache.fwd
    )
    d_x_bwd_rev, grads["bwd_W"], grads["bwd_b"] = _lstm_backward(
        np.ascontiguousarray(d_hidden[:, ::-1, H:]), p["bwd_W"], cache.bwd
    )
    d_x = d_x_fwd + d_x_bwd_rev[:, ::-1]
    d_embeddings = np.zeros_like(p["embeddings"])
    np.add.at(d_embeddings, cache.ids.ravel(), d_x.reshape(-1, d_x.shape[2]))
    d_embeddings[PAD_ID] = 0.0
    grads["embeddings"] = d_embeddings
    return grads


def encode(model: TaggerModel, token_ids: Sequence[int]) -> np.ndarray:
    """Per-token tag scores of shape ``(T, K)`` for one sentence.

    Raises:
        ValueError: On an empty sentence or an id outside the vocabulary.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("cannot encode an empty sentence")
    if ids.min() < 0 or ids.max() >= len(model.vocab):
        raise ValueError(f"token id outside vocabulary of size {len(model.vocab)}")
    emissions, _ = _encode_batch(model, ids[None])
    return emissions[0]


def batch_losses(model: TaggerModel, ids: np.ndarray, tags: np.ndarray) -> np.ndarray:
    """Per-sentence NLL for a ``(B, T)`` batch of equal-length sentences."""
    emissions, _ = _encode_batch(model, ids)
    return crf.batch_log_partition(emissions, model.transitions) - crf.batch_path_score(
        emissions, model.transitions, tags
    )


def batch_loss_and_grad(
    model: TaggerModel, ids: np.ndarray, tags: np.ndarray
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Per-sentence NLL and gradients of their sum for an equal-length batch."""
    emissions, cache = _encode_batch(model, ids)
    losses, d_em, d_trans = crf.batch_nll_and_grad(emissions, model.transitions, tags)
    grads = _backward_batch(model, d_em, cache)
    grads["transitions"] = d_trans
    return losses, grads


def nll_loss(model: TaggerModel, token_ids: Sequence[int], gold_tags: Sequence[int]) -> float:
    """``log_partition - path_score(gold)`` for one sentence."""
    ids, tags = _single(token_ids, gold_tags)
    return float(batch_losses(model, ids, tags)[0])


def nll_loss_and_grad(
    model: TaggerModel, token_ids: Sequence[int], gold_tags: Sequence[int]
) -> Tuple[float, Dict[str, np.ndarray]]:
    ids, tags = _single(token_ids, gold_tags)
    losses, grads = batch_loss_and_grad(model, ids, tags)
    return float(losses[0]), grads


def _single(token_ids: Sequence[int], gold_tags: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    if len(token_ids) != len(gold_tags):
        raise ValueError(f"{len(token_ids)} tokens but {len(gold_tags)} tags")
    if len(token_ids) == 0:
        raise ValueError("cannot score an empty sentence")
    return (
        np.asarray([token_ids], dtype=np.int64),
        np.asarray([gold_tags], dtype=np.int64),
    )


def tag_ids(tags: Sequence[str]) -> List[int]:
    """Map IOB2 tag strings to ids.

    Raises:
        ValueError: On a tag outside the tag set.
    """
    try:
        return [TAG_TO_ID[t] for t in tags]
    except KeyError as e:
        raise ValueError(f"unknown tag {e.args[0]!r}") from e


def predict(model: TaggerModel, tokens: TokenizedSentence | Sequence[str]) -> List[str]:
    """Viterbi-decoded IOB2 tags for a normalized sentence."""
    toks = tokens.tokens if isinstance(tokens, TokenizedSentence) else tokens
    if len(toks) == 0:
        return []
    path, _ = crf.viterbi(encode(model, model.vocab.ids(toks)), model.transitions)
    return [TAGS[i] for i in path]


def predict_batch(model: TaggerModel, sentences: Sequence[Sequence[str]]) -> List[List[str]]:
    """Decode many sentences, batching those of equal length."""
    results: List[List[str]] = [[] for _ in sentences]
    by_length: Dict[int, List[int]] = {}
    for index, toks in enumerate(sentences):
        if toks:
            by_length.setdefault(len(toks), []).append(index)
    for length in sorted(by_length):
        members = by_length[length]
        ids = np.stack([model.vocab.ids(sentences[i]) for i in members])
        emissions, _ = _encode_batch(model, ids)
        paths, _ = crf.batch_viterbi(emissions, model.transitions)
        for index, path in zip(members, paths):
            results[index] = [TAGS[i] for i in path]
    return results


# ============================================================================
# CHECKPOINTS
# ============================================================================


def save_checkpoint(model: TaggerModel, path: Path | str) -> Path:
    """Write the model in the binary checkpoint layout.

    Layout: little-endian header (magic ``EMSTAG``, format version, vocab
    size, embed dim, hidden dim, tag count, seed); then per vocabulary entry
    in id order a ``uint32`` byte length and the UTF-8 token; then every
    tensor of ``PARAM_ORDER`` as row-major ``<f8``.
    """
    hp = model.hp
    parts = [
        _HEADER.pack(
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            len(model.vocab),
            hp.embed_dim,
            hp.hidden_dim,
            model.num_tags,
            hp.seed,
        )
    ]
    for token in model.vocab.tokens():
        encoded = token.encode("utf-8")
        parts.append(_TOKEN_LEN.pack(len(encoded)))
        parts.append(encoded)
    for name in PARAM_ORDER:
        parts.append(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    written = atomic_write_bytes(path, b"".join(parts))
    logging.info(f"Saved checkpoint with {parameter_count(model)} parameters to {path}")
    return written


def load_checkpoint(path: Path | str) -> TaggerModel:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointError: On a wrong magic, unsupported version, undecodable
            vocabulary or truncated file.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, vocab_size, embed_dim, hidden_dim, num_tags, seed = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a tagger checkpoint")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")

    offset = _HEADER.size
    tokens = []
    try:
        for _ in range(vocab_size):
            (length,) = _TOKEN_LEN.unpack_from(data, offset)
            offset += _TOKEN_LEN.size
            if offset + length > len(data):
                raise CheckpointError(f"{path}: truncated vocabulary")
            tokens.append(data[offset : offset + length].decode("utf-8"))
            offset += length
    except struct.error as e:
        raise CheckpointError(f"{path}: truncated vocabulary") from e
    except UnicodeDecodeError as e:
        raise CheckpointError(f"{path}: vocabulary entry is not valid UTF-8") from e

    params = {}
    shapes = parameter_shapes(vocab_size, embed_dim, hidden_dim, num_tags)
    for name in PARAM_ORDER:
        count = int(np.prod(shapes[name]))
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated tensor {name}")
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(
            shapes[name]
        ).astype(np.float64)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")

    try:
        vocab = Vocabulary.from_tokens(tokens)
    except ValueError as e:
        raise CheckpointError(f"{path}: {e}") from e
    hp = Hyperparams(embed_dim=embed_dim, hidden_dim=hidden_dim, seed=seed)
    return TaggerModel(vocab, hp, params, num_tags)

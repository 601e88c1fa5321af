"""
Tests for the BiLSTM-CRF tagger: encoding, loss, gradients and checkpoints.
"""

import math

import numpy as np
import pytest

from ems_audit import crf
from ems_audit.entities import NUM_TAGS
from ems_audit.errors import CheckpointError
from ems_audit.tagger import (
    PAD_ID,
    PARAM_ORDER,
    UNK_ID,
    Hyperparams,
    Vocabulary,
    encode,
    init_model,
    load_checkpoint,
    nll_loss,
    nll_loss_and_grad,
    parameter_count,
    predict,
    predict_batch,
    save_checkpoint,
    tag_ids,
)

SMALL = Hyperparams(embed_dim=4, hidden_dim=3, seed=7)


@pytest.fixture
def vocab():
    return Vocabulary.build([["aspirin", "given", "pt"], ["12", "lead", "ecg"]])


@pytest.fixture
def random_model(vocab):
    """A small model with every finite parameter drawn at random."""
    model = init_model(vocab, SMALL)
    rng = np.random.default_rng(0)
    for name, value in model.params.items():
        finite = np.isfinite(value)
        value[finite] = rng.uniform(-0.5, 0.5, size=int(finite.sum()))
    return model


def _zero_model(vocab, hp=SMALL):
    model = init_model(vocab, hp)
    for name, value in model.params.items():
        value[np.isfinite(value)] = 0.0
    return model


class TestVocabulary:
    """Tests for Vocabulary."""

    def test_reserved_ids(self, vocab):
        assert vocab.token_to_id["<pad>"] == PAD_ID == 0
        assert vocab.token_to_id["<unk>"] == UNK_ID == 1
        assert vocab.token_to_id["aspirin"] == 2
        assert len(vocab) == 8

    def test_oov_maps_to_unk(self, vocab):
        assert list(vocab.ids(["aspirin", "asprin"])) == [2, UNK_ID]

    def test_tokens_round_trip(self, vocab):
        assert Vocabulary.from_tokens(vocab.tokens()) == vocab

    def test_from_tokens_requires_reserved(self):
        with pytest.raises(ValueError):
            Vocabulary.from_tokens(["a", "b"])


class TestHyperparams:
    """Tests for Hyperparams defaults and validation."""

    def test_defaults(self):
        hp = Hyperparams()
        assert (hp.embed_dim, hp.hidden_dim, hp.batch_size) == (100, 64, 512)
        assert hp.learning_rate == 0.001
        assert (hp.patience, hp.max_epochs) == (5, 300)

    def test_from_config(self):
        hp = Hyperparams.from_config({"batch_size": "32", "learning_rate": "0.01"})
        assert hp.batch_size == 32
        assert hp.learning_rate == 0.01

    @pytest.mark.parametrize("config", [{"batch_size": 0}, {"dropout": 0.5}])
    def test_invalid(self, config):
        with pytest.raises(ValueError):
            Hyperparams.from_config(config)


class TestInitialization:
    """Tests for init_model()."""

    def test_shapes_and_init(self, vocab):
        model = init_model(vocab, SMALL)
        p = model.params
        assert list(p) == list(PARAM_ORDER)
        assert p["embeddings"].shape == (8, 4)
        assert p["fwd_W"].shape == (7, 12)
        assert p["proj_W"].shape == (6, NUM_TAGS)
        assert p["transitions"].shape == (NUM_TAGS + 2, NUM_TAGS + 2)
        assert np.all(p["embeddings"] == 0)
        assert np.all(np.abs(p["fwd_W"]) <= 0.1)
        np.testing.assert_array_equal(p["fwd_b"][3:6], 1.0)
        assert p["fwd_b"][:3].sum() == 0
        assert np.all(np.isneginf(p["transitions"][:, NUM_TAGS]))

    def test_seeded(self, vocab):
        a, b = init_model(vocab, SMALL), init_model(vocab, SMALL)
        for name in PARAM_ORDER:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_parameter_count(self, vocab):
        expected = 8 * 4 + 2 * (7 * 12 + 12) + 6 * 35 + 35 + 37 * 37
        assert parameter_count(init_model(vocab, SMALL)) == expected


class TestEncode:
    """Tests for encode()."""

    def test_shape(self, random_model):
        assert encode(random_model, [2, 3, 4]).shape == (3, NUM_TAGS)

    def test_zero_parameters_give_projection_bias(self, vocab):
        model = _zero_model(vocab)
        model.params["proj_b"][:] = np.arange(NUM_TAGS, dtype=np.float64)
        em = encode(model, [2])
        np.testing.assert_array_equal(em[0], model.params["proj_b"])

    def test_deterministic(self, random_model):
        np.testing.assert_array_equal(
            encode(random_model, [2, 5, 1]), encode(random_model, [2, 5, 1])
        )

    def test_bidirectional_context(self, random_model):
        """Changing the last token changes the first token's scores."""
        a = encode(random_model, [2, 3, 4])
        b = encode(random_model, [2, 3, 5])
        assert not np.allclose(a[0], b[0])

    @pytest.mark.parametrize("ids", [[], [8], [-1]])
    def test_invalid_input(self, random_model, ids):
        with pytest.raises(ValueError):
            encode(random_model, ids)


class TestLoss:
    """Tests for the sentence NLL and its gradient."""

    def test_zero_parameters(self, vocab):
        """With zero parameters every path scores 0: loss = T ln 35."""
        model = _zero_model(vocab)
        for T in (1, 3, 6):
            loss = nll_loss(model, [2] * T, [0] * T)
            assert loss == pytest.approx(T * math.log(NUM_TAGS))

    def test_non_negative(self, random_model):
        rng = np.random.default_rng(1)
        for _ in range(50):
            T = int(rng.integers(1, 7))
            ids = rng.integers(1, 8, size=T).tolist()
            tags = rng.integers(0, NUM_TAGS, size=T).tolist()
            assert nll_loss(random_model, ids, tags) >= -1e-9

    def test_loss_equals_crf_difference(self, random_model):
        ids, tags = [2, 3, 4], [1, 2, 0]
        em = encode(random_model, ids)
        expected = crf.log_partition(em, random_model.transitions) - crf.path_score(
            em, random_model.transitions, tags
        )
        assert nll_loss(random_model, ids, tags) == pytest.approx(expected)

    def test_length_mismatch(self, random_model):
        with pytest.raises(ValueError, match="2 tokens but 1 tags"):
            nll_loss(random_model, [2, 3], [0])

    def test_gradient_matches_finite_differences(self, random_model):
        """Central differences agree with backprop on 150 random parameters."""
        rng = np.random.default_rng(42)
        ids = [2, 5, 3, 7, 4]
        tags = [1, 2, 0, 17, 0]
        _, grads = nll_loss_and_grad(random_model, ids, tags)
        step = 1e-5
        checked = 0
        for _ in range(150):
            name = PARAM_ORDER[int(rng.integers(len(PARAM_ORDER)))]
            value = random_model.params[name]
            index = tuple(int(rng.integers(n)) for n in value.shape)
            if name == "embeddings" and index[0] not in ids:
                index = (ids[int(rng.integers(len(ids)))],) + index[1:]
            if not np.isfinite(value[index]):
                continue
            original = value[index]
            value[index] = original + step
            plus = nll_loss(random_model, ids, tags)
            value[index] = original - step
            minus = nll_loss(random_model, ids, tags)
            value[index] = original
            numeric = (plus - minus) / (2 * step)
            analytic = grads[name][index]
            assert abs(analytic - numeric) / max(1.0, abs(analytic)) < 1e-4, (name, index)
            checked += 1
        assert checked >= 100

    def test_pad_row_gradient_is_zero(self, random_model):
        _, grads = nll_loss_and_grad(random_model, [PAD_ID, 2, PAD_ID], [0, 1, 0])
        assert np.all(grads["embeddings"][PAD_ID] == 0)
        assert np.any(grads["embeddings"][2] != 0)

    def test_unreachable_transition_gradients_are_zero(self, random_model):
        _, grads = nll_loss_and_grad(random_model, [2, 3], [1, 2])
        assert np.all(grads["transitions"][:, NUM_TAGS] == 0)
        assert np.all(grads["transitions"][NUM_TAGS + 1, :] == 0)


class TestPredict:
    """Tests for predict() and predict_batch()."""

    def test_length_and_tag_set(self, random_model):
        tags = predict(random_model, ["aspirin", "never", "seen"])
        assert len(tags) == 3
        assert all(t in {"O"} or t[:2] in ("B-", "I-") for t in tags)

    def test_empty(self, random_model):
        assert predict(random_model, []) == []

    def test_batch_matches_single(self, random_model):
        sentences = [["aspirin", "given"], [], ["pt"], ["12", "lead"], ["lead", "ecg", "pt"]]
        assert predict_batch(random_model, sentences) == [
            predict(random_model, s) for s in sentences
        ]

    def test_oov_equals_unk(self, random_model):
        assert predict(random_model, ["zzz", "pt"]) == predict(random_model, ["<unk>", "pt"])

    def test_tag_ids(self):
        assert tag_ids(["O", "B-ECG", "I-ECG"]) == [0, 1, 2]
        with pytest.raises(ValueError, match="unknown tag"):
            tag_ids(["B-XYZ"])


class TestCheckpoint:
    """Tests for checkpoint save and load."""

    def test_round_trip(self, random_model, tmp_path):
        path = save_checkpoint(random_model, tmp_path / "model.ckpt")
        loaded = load_checkpoint(path)
        assert loaded.vocab == random_model.vocab
        assert loaded.hp.embed_dim == 4
        assert loaded.hp.hidden_dim == 3
        assert loaded.hp.seed == 7
        for name in PARAM_ORDER:
            np.testing.assert_array_equal(loaded.params[name], random_model.params[name])
        sentence = ["aspirin", "given", "pt"]
        assert predict(loaded, sentence) == predict(random_model, sentence)

    def test_file_size(self, random_model, tmp_path):
        path = save_checkpoint(random_model, tmp_path / "model.ckpt")
        vocab_bytes = sum(4 + len(t.encode()) for t in random_model.vocab.tokens())
        header = 6 + 2 + 4 * 4 + 8
        assert path.stat().st_size == header + vocab_bytes + 8 * parameter_count(random_model)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTAMODEL" * 10)
        with pytest.raises(CheckpointError, match="not a tagger checkpoint"):
            load_checkpoint(path)

    def test_truncated(self, random_model, tmp_path):
        path = save_checkpoint(random_model, tmp_path / "model.ckpt")
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, random_model, tmp_path):
        path = save_checkpoint(random_model, tmp_path / "model.ckpt")
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_undecodable_vocabulary(self, random_model, tmp_path):
        path = save_checkpoint(random_model, tmp_path / "model.ckpt")
        data = bytearray(path.read_bytes())
        first_token = 6 + 2 + 4 * 4 + 8 + 4
        data[first_token] = 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="not valid UTF-8"):
            load_checkpoint(path)

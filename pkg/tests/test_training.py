"""
Tests for Adam, early stopping and end-to-end tagger training.
"""

import math

import numpy as np
import pytest

from conftest import sentence
from ems_audit.errors import EmptyTrainingSetError
from ems_audit.tagger import Hyperparams, predict
from ems_audit.training import (
    LOG_COLUMNS,
    Adam,
    EpochRecord,
    TrainingLog,
    dataset_loss,
    train,
    write_training_log,
)

TOY_HP = Hyperparams(
    embed_dim=8, hidden_dim=6, batch_size=4, learning_rate=0.05, patience=10, max_epochs=80
)


class TestAdam:
    """Tests for the Adam optimizer."""

    def test_first_step_moves_by_learning_rate(self):
        """Bias correction makes the first step lr * sign(grad)."""
        params = {"w": np.array([1.0, -2.0, 0.5])}
        Adam(params, learning_rate=0.1).step(params, {"w": np.array([3.0, -0.01, 0.0])})
        np.testing.assert_allclose(params["w"], [0.9, -1.9, 0.5], atol=1e-6)

    def test_minimizes_quadratic(self):
        params = {"w": np.array([5.0, -3.0])}
        optimizer = Adam(params, learning_rate=0.1)
        for _ in range(500):
            optimizer.step(params, {"w": 2 * params["w"]})
        np.testing.assert_allclose(params["w"], 0.0, atol=0.05)

    def test_updates_in_place(self):
        w = np.ones(2)
        params = {"w": w}
        Adam(params).step(params, {"w": np.ones(2)})
        assert params["w"] is w
        assert np.all(w < 1.0)


class TestEarlyStopping:
    """Tests for the stopping rule, using a rigged dev-loss sequence."""

    def test_stops_after_patience_and_restores_best(self, toy_corpus):
        losses = [5, 4, 4, 4, 4, 4, 4, 3, 3]
        snapshots = {}

        def rigged(model, epoch):
            snapshots[epoch] = {k: v.copy() for k, v in model.params.items()}
            return losses[epoch - 1]

        hp = Hyperparams(embed_dim=4, hidden_dim=3, batch_size=2, patience=5, max_epochs=50)
        model, log = train(toy_corpus, [], hp, evaluate_fn=rigged)
        assert len(log.epochs) == 7
        assert log.stopped_early
        assert log.best_epoch == 2
        assert log.best_dev_loss == 4
        for name, value in model.params.items():
            np.testing.assert_array_equal(value, snapshots[2][name])
        assert not np.array_equal(model.params["proj_W"], snapshots[7]["proj_W"])

    def test_equal_loss_is_not_improvement(self, toy_corpus):
        hp = Hyperparams(embed_dim=4, hidden_dim=3, patience=2, max_epochs=10)
        _, log = train(toy_corpus, [], hp, evaluate_fn=lambda model, epoch: 1.0)
        assert log.best_epoch == 1
        assert len(log.epochs) == 3

    def test_max_epochs(self, toy_corpus):
        hp = Hyperparams(embed_dim=4, hidden_dim=3, patience=5, max_epochs=3)
        _, log = train(toy_corpus, [], hp, evaluate_fn=lambda model, epoch: 10.0 - epoch)
        assert len(log.epochs) == 3
        assert not log.stopped_early
        assert log.best_epoch == 3


class TestTrain:
    """Tests for train() on small corpora."""

    def test_empty_training_set(self):
        with pytest.raises(EmptyTrainingSetError, match="empty training set"):
            train([], [], TOY_HP)

    def test_only_empty_sentences(self):
        with pytest.raises(EmptyTrainingSetError):
            train([sentence("A", "", "")], [], TOY_HP)

    def test_vocabulary_from_train_only(self, toy_corpus):
        dev = [sentence("D1", "unseen aspirin", "O B-ASPIRIN")]
        hp = Hyperparams(embed_dim=4, hidden_dim=3, max_epochs=1)
        model, _ = train(toy_corpus, dev, hp)
        assert "unseen" not in model.vocab
        assert "aspirin" in model.vocab

    @pytest.mark.slow
    def test_learns_separable_mapping(self, toy_corpus):
        """'aspirin' -> B-ASPIRIN, everything else O, on held-out sentences."""
        dev = [sentence("D1", "aspirin stat", "B-ASPIRIN O"), sentence("D2", "pt", "O")]
        model, log = train(toy_corpus, dev, TOY_HP)
        assert log.epochs[-1].train_loss < log.epochs[0].train_loss
        held_out = ["pt given aspirin stat", "aspirin", "no pain given", "pt alert aspirin"]
        for text in held_out:
            tokens = text.split()
            expected = ["B-ASPIRIN" if t == "aspirin" else "O" for t in tokens]
            assert predict(model, tokens) == expected, text
        for s in toy_corpus:
            assert predict(model, s.tokens) == list(s.tags)

    def test_deterministic(self, toy_corpus):
        hp = Hyperparams(embed_dim=4, hidden_dim=3, batch_size=2, max_epochs=3, seed=5)
        a, log_a = train(toy_corpus, toy_corpus[:2], hp)
        b, log_b = train(toy_corpus, toy_corpus[:2], hp)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])
        assert [r.dev_loss for r in log_a.epochs] == [r.dev_loss for r in log_b.epochs]

    def test_seed_changes_result(self, toy_corpus):
        a, _ = train(toy_corpus, [], Hyperparams(embed_dim=4, hidden_dim=3, max_epochs=2, seed=1))
        b, _ = train(toy_corpus, [], Hyperparams(embed_dim=4, hidden_dim=3, max_epochs=2, seed=2))
        assert not np.array_equal(a.params["fwd_W"], b.params["fwd_W"])

    def test_dataset_loss(self, toy_corpus):
        hp = Hyperparams(embed_dim=4, hidden_dim=3, max_epochs=1)
        model, log = train(toy_corpus, toy_corpus, hp)
        assert dataset_loss(model, toy_corpus) == pytest.approx(log.epochs[0].dev_loss)
        assert math.isnan(dataset_loss(model, []))


class TestTrainingLog:
    """Tests for the CSV training log."""

    def test_csv(self, tmp_path):
        log = TrainingLog([EpochRecord(1, 2.5, 3.25, 10.0), EpochRecord(2, 2.0, 3.0, 20.5)], 2)
        path = write_training_log(log, tmp_path / "log.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(LOG_COLUMNS)
        assert lines[1] == "1,2.500000,3.250000,10.0"
        assert len(lines) == 3
        assert log.best_dev_loss == 3.0

    def test_empty_log(self):
        assert TrainingLog().best_dev_loss == math.inf

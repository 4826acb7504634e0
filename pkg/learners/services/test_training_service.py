"""
Unit tests for supervised training.

This module tests teacher training on synthetic worlds and the
maximum-likelihood warm start of the prompter.
"""

from dataclasses import replace

import numpy as np
import pytest

from core.exceptions import InvalidArgumentError, NonFiniteLossError
from core.rng import RngStream
from corpus.world import WorldSpec, make_world, sample_labeled, split
from learners.classifier import ClassifierModel, predict
from learners.language_models import NeuralLM
from learners.services import TrainingService


def dev_accuracy(model, examples):
    return sum(predict(model, example.x) == example.y for example in examples) / len(examples)


@pytest.fixture
def service():
    """Provide the training service."""
    return TrainingService()


class TestTrainClassifierSupervised:
    """Test cases for TrainingService.train_classifier_supervised."""

    def test_zero_epochs_returns_unchanged_model(self, service):
        """Test that epochs=0 leaves the parameters alone."""
        world = make_world(WorldSpec(seed=1))
        data = sample_labeled(world, 20, RngStream(1).generator())
        model = ClassifierModel.initialized(len(world.vocab), 4, 8, RngStream(2).generator())

        trained, log = service.train_classifier_supervised(model, data, 0, 0.1, 8, RngStream(3).generator())

        np.testing.assert_array_equal(trained.flat(), model.flat())
        assert log.losses == []

    def test_deterministic_under_seed(self, service):
        """Test that the same streams give bit-identical models."""
        world = make_world(WorldSpec(seed=1))
        data = sample_labeled(world, 60, RngStream(4).generator())
        model = ClassifierModel.initialized(len(world.vocab), 4, 8, RngStream(5).generator())

        first, _ = service.train_classifier_supervised(model, data, 2, 0.05, 16, RngStream(6).generator())
        second, _ = service.train_classifier_supervised(model, data, 2, 0.05, 16, RngStream(6).generator())

        np.testing.assert_array_equal(first.flat(), second.flat())

    def test_loss_decreases(self, service):
        """Test that the training loss falls over epochs."""
        world = make_world(WorldSpec(seed=1))
        data = sample_labeled(world, 400, RngStream(7).generator())
        model = ClassifierModel.initialized(len(world.vocab), 4, 16, RngStream(8).generator())

        _, log = service.train_classifier_supervised(model, data, 4, 0.01, 32, RngStream(9).generator(), optimizer="adam")

        assert log.losses[-1] < log.losses[0]

    def test_divergence_aborts(self, service):
        """Test that NaN parameters stop training with a diagnostic."""
        world = make_world(WorldSpec(seed=1))
        data = sample_labeled(world, 10, RngStream(10).generator())
        model = ClassifierModel.initialized(len(world.vocab), 4, 8, RngStream(11).generator())
        model.bias[0] = np.nan

        with pytest.raises(NonFiniteLossError, match="epoch 0 batch 0"):
            service.train_classifier_supervised(model, data, 1, 0.1, 4, RngStream(12).generator())

    def test_empty_data_rejected(self, service):
        """Test that training needs data."""
        with pytest.raises(InvalidArgumentError):
            service.train_classifier_supervised(ClassifierModel.zeros(8, 2, 2), [], 1, 0.1, 4, RngStream(0).generator())

    def test_unlearnable_world_is_at_chance(self, service):
        """
        Test the boost-1 control world.

        Arrange: Identical class chains, 2000 training and 1000 dev sentences
        Act: Train three epochs
        Assert: Dev accuracy within 0.05 of 1/C
        """
        # Arrange
        world = make_world(replace(WorldSpec(seed=3), boost=1.0))
        train, dev = split(sample_labeled(world, 3000, RngStream(13).generator()), [2 / 3, 1 / 3])
        model = ClassifierModel.initialized(len(world.vocab), 4, 16, RngStream(14).generator())

        # Act
        trained, _ = service.train_classifier_supervised(model, train, 3, 0.01, 32, RngStream(15).generator(), optimizer="adam")

        # Assert
        assert abs(dev_accuracy(trained, dev) - 0.25) < 0.05

    @pytest.mark.slow
    def test_default_world_is_learned(self, service):
        """
        Test the teacher on the default world.

        Arrange: 5000 labeled sentences split 80/10/10
        Act: Train a width-32 teacher with Adam
        Assert: Dev accuracy of at least 0.90
        """
        # Arrange
        world = make_world(WorldSpec(seed=0))
        train, dev, _ = split(sample_labeled(world, 5000, RngStream(16).generator()), [0.8, 0.1, 0.1])
        model = ClassifierModel.initialized(len(world.vocab), 4, 32, RngStream(17).generator())

        # Act
        trained, log = service.train_classifier_supervised(
            model, train, 8, 0.01, 32, RngStream(18).generator(), optimizer="adam", dev=dev
        )

        # Assert
        assert log.dev_accuracy[-1] == dev_accuracy(trained, dev)
        assert dev_accuracy(trained, dev) >= 0.90


class TestPretrainLanguageModel:
    """Test cases for TrainingService.pretrain_language_model."""

    def test_zero_epochs_returns_unchanged_model(self, service):
        """Test that epochs=0 leaves the parameters alone."""
        model = NeuralLM.initialized(10, RngStream(19).generator(), dim=4)

        trained, log = service.pretrain_language_model(model, [(4, 5, 6)], 0, 0.1, 4, RngStream(20).generator())

        np.testing.assert_array_equal(trained.flat(), model.flat())
        assert log.losses == []

    def test_learns_a_repeated_sentence(self, service):
        """
        Test maximum-likelihood fitting.

        Arrange: Twenty copies of one four-token sentence over ten ids
        Act: Thirty epochs of Adam
        Assert: The loss falls and every continuation of the sentence is the most likely token
        """
        # Arrange
        model = NeuralLM.initialized(10, RngStream(21).generator(), dim=4, window=2)
        sentence = (4, 5, 6, 7)

        # Act
        trained, log = service.pretrain_language_model(model, [sentence] * 20, 30, 0.05, 5, RngStream(22).generator())

        # Assert
        assert len(log.losses) == 30
        assert log.losses[-1] < log.losses[0]
        for t in range(1, len(sentence)):
            assert int(np.argmax(trained.next_dist(sentence[:t]))) == sentence[t]

    def test_first_loss_is_mean_negative_log_likelihood(self, service):
        """Test that a zero learning rate reports the mean NLL of the initial model."""
        model = NeuralLM.initialized(10, RngStream(23).generator(), dim=4)
        corpus = [(4, 5, 6), (7, 8)]
        expected = -np.mean([np.log(model.next_dist(s[:t])[s[t]]) for s in corpus for t in range(1, len(s))])

        _, log = service.pretrain_language_model(model, corpus, 1, 0.0, 1, RngStream(24).generator(), optimizer="sgd")

        assert log.losses[0] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("corpus", [[], [(4,), (5,)]])
    def test_needs_a_target(self, service, corpus):
        """Test that a corpus without a second token anywhere is rejected."""
        with pytest.raises(InvalidArgumentError):
            service.pretrain_language_model(NeuralLM.zeros(10), corpus, 1, 0.1, 4, RngStream(25).generator())

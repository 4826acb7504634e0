"""
Unit tests for corpus-driven distillation.

This module tests KDService.distill_with_corpus and the random-text corpus.
"""

import math
from collections import Counter

import numpy as np
import pytest

from core.exceptions import InvalidArgumentError
from core.rng import RngStream
from corpus.vocab import build_vocab
from corpus.world import WorldSpec, make_world, sample_labeled, sample_unlabeled
from distillation.kd import KDConfig
from distillation.services import KDService, monitor, random_text_corpus
from learners.classifier import ClassifierModel


@pytest.fixture(scope="module")
def setup():
    """Provide a world, a random teacher, a student and a small transfer set."""
    world = make_world(WorldSpec(seed=4))
    stream = RngStream(501)
    teacher = ClassifierModel.initialized(len(world.vocab), world.num_classes, 8, stream.child(0).generator(), scale=0.5, hash_buckets=64)
    student = ClassifierModel.initialized(len(world.vocab), world.num_classes, 8, stream.child(1).generator(), hash_buckets=64)
    corpus = sample_unlabeled(world, 40, True, stream.child(2).generator())
    dev = sample_labeled(world, 20, stream.child(3).generator())
    return world, teacher, student, corpus, dev


@pytest.fixture
def service():
    """Provide the distillation service."""
    return KDService()


class TestDistillWithCorpus:
    """Test cases for KDService.distill_with_corpus."""

    def test_zero_epochs_return_unchanged_student(self, setup, service):
        """Test that N = 0 returns a copy of the initial student and an empty log."""
        _, teacher, student, corpus, _ = setup

        trained, report = service.distill_with_corpus(student, teacher, corpus, KDConfig(epochs=0), RngStream(1).generator())

        np.testing.assert_array_equal(trained.flat(), student.flat())
        assert trained is not student
        assert report.epochs == []

    def test_deterministic_under_seed(self, setup, service):
        """Test that identical config and seed give bit-identical students."""
        _, teacher, student, corpus, _ = setup
        cfg = KDConfig(epochs=2, batch_size=8)

        first, _ = service.distill_with_corpus(student, teacher, corpus, cfg, RngStream(2).generator())
        second, _ = service.distill_with_corpus(student, teacher, corpus, cfg, RngStream(2).generator())

        np.testing.assert_array_equal(first.flat(), second.flat())

    def test_report_tracks_epochs_and_monitoring(self, setup, service):
        """
        Test the run report.

        Arrange: Three epochs with a dev split and an epoch callback
        Act: Distill on the transfer set
        Assert: One record per epoch, monitoring values in [0, 1], callback per epoch
        """
        # Arrange
        _, teacher, student, corpus, dev = setup
        seen = []

        # Act
        _, report = service.distill_with_corpus(
            student,
            teacher,
            corpus,
            KDConfig(epochs=3, batch_size=16),
            RngStream(3).generator(),
            method="unlabel",
            dev=dev,
            on_epoch=lambda r: seen.append(r.final.epoch),
        )

        # Assert
        assert report.method == "unlabel"
        assert [record.epoch for record in report.epochs] == [0, 1, 2]
        assert all(0.0 <= record.dev_accuracy <= 1.0 and 0.0 <= record.agreement <= 1.0 for record in report.epochs)
        assert seen == [0, 1, 2]

    def test_student_moves_towards_teacher(self, setup, service):
        """Test that distillation lowers the epoch loss."""
        _, teacher, student, corpus, _ = setup

        _, report = service.distill_with_corpus(
            student, teacher, corpus, KDConfig(epochs=5, batch_size=8, lr=0.01, optimizer="adam"), RngStream(4).generator()
        )

        assert report.epochs[-1].loss < report.epochs[0].loss

    def test_rejects_empty_corpus(self, setup, service):
        """Test that an empty transfer set is rejected."""
        _, teacher, student, _, _ = setup

        with pytest.raises(InvalidArgumentError):
            service.distill_with_corpus(student, teacher, [], KDConfig(), RngStream(5).generator())

    def test_monitor_without_dev_split(self, setup):
        """Test that monitoring without a dev split reports nothing."""
        _, teacher, student, _, _ = setup

        assert monitor(teacher, student, []) == (None, None)
        assert monitor(teacher, teacher, setup[4])[1] == 1.0


class TestRandomTextCorpus:
    """Test cases for random_text_corpus."""

    @pytest.fixture
    def vocab(self):
        """Provide a vocabulary with eight content tokens."""
        return build_vocab(["a b c d e f g h"])

    def test_tokens_are_uniform_over_content(self, vocab):
        """
        Test token frequencies.

        Arrange: Eight content tokens
        Act: Draw 10^5 tokens
        Assert: Every frequency lies within three binomial standard deviations of 1/8
        """
        # Arrange
        rng = RngStream(6).generator()

        # Act
        corpus = random_text_corpus(vocab, 10_000, (10, 10), rng)
        counts = Counter(token for seq in corpus for token in seq)

        # Assert
        total = 100_000
        sigma = math.sqrt(total * (1 / 8) * (7 / 8))
        assert set(counts) == set(vocab.content_ids)
        for token in vocab.content_ids:
            assert abs(counts[token] - total / 8) <= 3 * sigma

    def test_lengths_within_range(self, vocab):
        """Test that every sequence length lies in the requested range."""
        corpus = random_text_corpus(vocab, 500, (3, 7), RngStream(7).generator())

        lengths = {len(seq) for seq in corpus}

        assert lengths == set(range(3, 8))

    def test_deterministic_single_sequence(self, vocab):
        """Test that n = 1 with a fixed seed is reproducible."""
        first = random_text_corpus(vocab, 1, (5, 9), RngStream(8).generator())
        second = random_text_corpus(vocab, 1, (5, 9), RngStream(8).generator())

        assert first == second
        assert len(first) == 1

    @pytest.mark.parametrize("n, length_range", [(0, (1, 3)), (5, (0, 3)), (5, (4, 3))])
    def test_rejects_bad_arguments(self, vocab, n, length_range):
        """Test that n < 1 or an invalid range is rejected."""
        with pytest.raises(InvalidArgumentError):
            random_text_corpus(vocab, n, length_range, RngStream(9).generator())

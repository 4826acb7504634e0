"""
Corpus service layer.

This module assembles the datasets an experiment needs from a realized
world: the labeled splits the teacher is trained and evaluated on, and the
broad unlabeled corpus the content generator is fitted on.
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.rng import RngStream
from corpus.vocab import TokenSeq
from corpus.world import LabeledExample, World, sample_labeled, sample_unlabeled, split

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Datasets:
    """
    Data drawn from the world for one experiment.

    Attributes
    ----------
    train : list[LabeledExample]
        Teacher training split (also the Vanilla-KD transfer set).
    dev : list[LabeledExample]
        Model-selection split.
    test : list[LabeledExample]
        Held-out split for accuracy and agreement.
    generator_corpus : list[TokenSeq]
        Unlabeled class/background mixture the content generator is fitted on.
    background : list[TokenSeq]
        Pure background corpus (the Unlabel-KD transfer set).
    """

    train: list[LabeledExample]
    dev: list[LabeledExample]
    test: list[LabeledExample]
    generator_corpus: list[TokenSeq]
    background: list[TokenSeq]


class CorpusService:
    """
    Service for drawing experiment datasets from a world.

    Every draw uses its own derived stream so adding a dataset never shifts
    the contents of another.
    """

    LABELED = 0
    GENERATOR = 1
    BACKGROUND = 2

    def build_datasets(
        self,
        world: World,
        stream: RngStream,
        labeled_size: int,
        unlabeled_size: int,
        fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
        background_size: int | None = None,
    ) -> Datasets:
        """
        Draw the labeled splits and the unlabeled corpora.

        Parameters
        ----------
        world : World
            Realized world.
        stream : RngStream
            Parent stream; children are derived per dataset.
        labeled_size : int
            Number of labeled sentences before splitting.
        unlabeled_size : int
            Size of the generator corpus.
        fractions : tuple[float, float, float]
            Train/dev/test fractions.
        background_size : int | None
            Size of the background corpus; defaults to ``unlabeled_size``.

        Returns
        -------
        Datasets
            All datasets of the experiment.
        """
        labeled = sample_labeled(world, labeled_size, stream.child(self.LABELED).generator())
        train, dev, test = split(labeled, fractions)
        generator_corpus = sample_unlabeled(world, unlabeled_size, True, stream.child(self.GENERATOR).generator())
        background = sample_unlabeled(world, background_size or unlabeled_size, True, stream.child(self.BACKGROUND).generator(), mix=1.0)
        logger.info(
            "Drew datasets: train=%d dev=%d test=%d generator=%d background=%d",
            len(train),
            len(dev),
            len(test),
            len(generator_corpus),
            len(background),
        )
        return Datasets(train, dev, test, generator_corpus, background)

    def keyword_centroid_accuracy(self, world: World, examples: list[LabeledExample]) -> float:
        """
        Accuracy of a brute-force keyword counter on ``examples``.

        Each sentence is assigned the class whose keywords it contains most
        often (ties to the lowest class index). A world is considered
        separable when this exceeds 0.9.

        Parameters
        ----------
        world : World
            World providing the keyword sets.
        examples : list[LabeledExample]
            Labeled sentences.

        Returns
        -------
        float
            Fraction of correctly assigned sentences.
        """
        if not examples:
            return 0.0
        correct = 0
        for example in examples:
            counts = np.array([sum(token in keywords for token in example.x) for keywords in world.keyword_ids])
            correct += int(np.argmax(counts)) == example.y
        return correct / len(examples)

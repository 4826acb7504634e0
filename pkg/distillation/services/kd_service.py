"""
Corpus-driven distillation service.

Vanilla-KD, Unlabel-KD and Random Text all train the student on a fixed
transfer set; they differ only in where that set comes from.
"""

import logging
import math
from collections.abc import Callable, Sequence

import numpy as np

from core.exceptions import InvalidArgumentError
from corpus.vocab import TokenSeq, Vocab
from corpus.world import LabeledExample
from distillation.kd import KDConfig, student_step
from distillation.reports import EpochRecord, RunReport
from evaluation.metrics import accuracy, agreement
from learners.classifier import ClassifierModel

logger = logging.getLogger(__name__)

EpochCallback = Callable[[RunReport], None]


def monitor(
    teacher: ClassifierModel,
    student: ClassifierModel,
    dev: Sequence[LabeledExample],
) -> tuple[float | None, float | None]:
    """Dev accuracy and teacher agreement, or ``(None, None)`` without a dev split."""
    if not dev:
        return None, None
    return accuracy(student, dev), agreement(teacher, student, [example.x for example in dev])


def random_text_corpus(
    vocab: Vocab,
    n: int,
    length_range: tuple[int, int],
    rng: np.random.Generator,
) -> list[TokenSeq]:
    """
    Sequences of i.i.d. uniform non-reserved tokens.

    Raises
    ------
    InvalidArgumentError
        If ``n`` < 1, the length range is empty or the vocabulary has no content tokens.
    """
    low, high = length_range
    if n < 1 or low < 1 or low > high:
        raise InvalidArgumentError("random text needs n >= 1 and 1 <= min length <= max length")
    content = vocab.content_ids
    if len(content) == 0:
        raise InvalidArgumentError("vocabulary has no content tokens")
    corpus = []
    for _ in range(n):
        length = int(rng.integers(low, high + 1))
        corpus.append(tuple(int(t) for t in rng.integers(content.start, content.stop, size=length)))
    return corpus


class KDService:
    """Service for distilling a student on a fixed transfer set."""

    def distill_with_corpus(
        self,
        student: ClassifierModel,
        teacher: ClassifierModel,
        corpus: Sequence[TokenSeq],
        cfg: KDConfig,
        rng: np.random.Generator,
        method: str = "corpus",
        dev: Sequence[LabeledExample] = (),
        on_epoch: EpochCallback | None = None,
    ) -> tuple[ClassifierModel, RunReport]:
        """
        Train a copy of ``student`` for ``cfg.epochs`` shuffled passes over ``corpus``.

        Parameters
        ----------
        student : ClassifierModel
            Initial student (left untouched).
        teacher : ClassifierModel
            Frozen teacher.
        corpus : Sequence[TokenSeq]
            Non-empty transfer set.
        cfg : KDConfig
            Distillation settings.
        rng : np.random.Generator
            Shuffles the corpus every epoch.
        method : str
            Name recorded in the report.
        dev : Sequence[LabeledExample]
            Optional monitoring split.
        on_epoch : EpochCallback | None
            Called with the report after every epoch.

        Returns
        -------
        tuple[ClassifierModel, RunReport]
            Trained student and its per-epoch log.
        """
        if not corpus:
            raise InvalidArgumentError("transfer set must be non-empty")
        trained = student.copy()
        report = RunReport(method)
        steps_per_epoch = math.ceil(len(corpus) / cfg.batch_size)
        optimizer = cfg.make_optimizer(cfg.epochs * steps_per_epoch)

        for epoch in range(cfg.epochs):
            order = rng.permutation(len(corpus))
            losses = []
            for step in range(steps_per_epoch):
                batch = [corpus[int(i)] for i in order[step * cfg.batch_size : (step + 1) * cfg.batch_size]]
                trained, loss = student_step(trained, batch, teacher, cfg, optimizer)
                losses.append(loss * len(batch))
                logger.debug("Epoch %d step %d: loss=%.6f", epoch, step, loss)
            dev_accuracy, dev_agreement = monitor(teacher, trained, dev)
            report.epochs.append(EpochRecord(epoch, math.fsum(losses) / len(corpus), dev_accuracy, dev_agreement))
            logger.info("%s epoch %d: loss=%.4f dev_accuracy=%s agreement=%s", method, epoch, report.epochs[-1].loss, dev_accuracy, dev_agreement)
            if on_epoch is not None:
                on_epoch(report)
        return trained, report

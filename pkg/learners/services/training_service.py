"""
Supervised training of classifiers and language models.

Produces the teacher (mini-batch descent on cross-entropy over labeled data
drawn from the world) and the warm start of the prompter (maximum
likelihood on unlabeled text).
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import InvalidArgumentError, NonFiniteLossError
from core.numerics import log_softmax, softmax, sum_log_probs
from corpus.vocab import TokenSeq
from corpus.world import LabeledExample
from learners.classifier import ClassifierModel, accumulate_grad, classifier_logits, predict
from learners.factories import LearningRateSchedule, OptimizerFactoryProvider
from learners.language_models import NeuralLM

logger = logging.getLogger(__name__)


@dataclass
class TrainingLog:
    """Per-epoch mean training loss and (when a dev split is given) dev accuracy."""

    losses: list[float] = field(default_factory=list)
    dev_accuracy: list[float] = field(default_factory=list)


class TrainingService:
    """Service for supervised training of classifiers and language models."""

    def train_classifier_supervised(
        self,
        model: ClassifierModel,
        data: Sequence[LabeledExample],
        epochs: int,
        lr: float,
        batch_size: int,
        rng: np.random.Generator,
        optimizer: str = "sgd",
        weight_decay: float = 0.0,
        schedule: str = "constant",
        warmup_fraction: float = 0.1,
        dev: Sequence[LabeledExample] = (),
    ) -> tuple[ClassifierModel, TrainingLog]:
        """
        Train a copy of ``model`` by mini-batch descent on cross-entropy.

        Parameters
        ----------
        model : ClassifierModel
            Initial parameters (left untouched).
        data : Sequence[LabeledExample]
            Non-empty labeled training data.
        epochs : int
            Number of passes; 0 returns an unchanged copy.
        lr : float
            Base learning rate.
        batch_size : int
            Examples per update.
        rng : np.random.Generator
            Shuffles the data every epoch.
        optimizer : str
            ``"sgd"`` or ``"adam"``.
        weight_decay : float
            Decoupled weight decay.
        schedule : str
            ``"constant"`` or ``"warmup_linear"``.
        warmup_fraction : float
            Share of all steps spent warming up under ``warmup_linear``.
        dev : Sequence[LabeledExample]
            Optional split scored after every epoch.

        Returns
        -------
        tuple[ClassifierModel, TrainingLog]
            Trained model and the per-epoch log.

        Raises
        ------
        NonFiniteLossError
            If the loss diverges; the message names the epoch and batch.
        """
        if not data:
            raise InvalidArgumentError("supervised training needs non-empty data")
        if epochs < 0 or batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")

        trained = model.copy()
        log = TrainingLog()
        batches_per_epoch = math.ceil(len(data) / batch_size)
        total_steps = max(1, epochs * batches_per_epoch)
        lr_schedule = LearningRateSchedule(schedule, int(warmup_fraction * total_steps), total_steps) if schedule != "constant" else None
        opt = OptimizerFactoryProvider.get_factory(optimizer).create_optimizer(
            lr=lr, weight_decay=weight_decay, schedule=lr_schedule
        )

        for epoch in range(epochs):
            order = rng.permutation(len(data))
            epoch_loss = 0.0
            for batch_index in range(batches_per_epoch):
                batch = [data[int(i)] for i in order[batch_index * batch_size : (batch_index + 1) * batch_size]]
                grad = trained.zeros_like()
                batch_loss = 0.0
                for example in batch:
                    logits = classifier_logits(trained, example.x)
                    if not np.all(np.isfinite(logits)):
                        raise NonFiniteLossError("ce", f"epoch {epoch} batch {batch_index}")
                    batch_loss -= float(log_softmax(logits)[example.y])
                    dlogits = softmax(logits)
                    dlogits[example.y] -= 1.0
                    accumulate_grad(trained, example.x, dlogits, grad, 1.0 / len(batch))
                if not math.isfinite(batch_loss):
                    raise NonFiniteLossError("ce", f"epoch {epoch} batch {batch_index}")
                opt.step(trained.parameters(), grad.parameters())
                epoch_loss += batch_loss
            log.losses.append(epoch_loss / len(data))
            if dev:
                log.dev_accuracy.append(sum(predict(trained, ex.x) == ex.y for ex in dev) / len(dev))
                logger.info("Epoch %d: loss=%.4f dev_accuracy=%.4f", epoch, log.losses[-1], log.dev_accuracy[-1])
            else:
                logger.info("Epoch %d: loss=%.4f", epoch, log.losses[-1])
        return trained, log

    def pretrain_language_model(
        self,
        model: NeuralLM,
        corpus: Sequence[TokenSeq],
        epochs: int,
        lr: float,
        batch_size: int,
        rng: np.random.Generator,
        optimizer: str = "adam",
    ) -> tuple[NeuralLM, TrainingLog]:
        """
        Fit a copy of a neural next-token model to ``corpus`` by maximum likelihood.

        Every token after the first of a sentence is a target given the
        tokens before it, matching how prompts continue a drawn first word.
        The loss is the mean negative log-likelihood per target token.

        Parameters
        ----------
        model : NeuralLM
            Initial parameters (left untouched).
        corpus : Sequence[TokenSeq]
            Unlabeled sentences; at least one must have two or more tokens.
        epochs : int
            Number of passes; 0 returns an unchanged copy.
        lr : float
            Learning rate.
        batch_size : int
            Sentences per update.
        rng : np.random.Generator
            Shuffles the corpus every epoch.
        optimizer : str
            ``"sgd"`` or ``"adam"``.

        Returns
        -------
        tuple[NeuralLM, TrainingLog]
            Trained model and the per-epoch mean loss.

        Raises
        ------
        NonFiniteLossError
            If the loss diverges; the message names the epoch and batch.
        """
        targets = sum(max(len(sentence) - 1, 0) for sentence in corpus)
        if targets == 0:
            raise InvalidArgumentError("language model pretraining needs a sentence of two or more tokens")
        if epochs < 0 or batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")

        trained = model.copy()
        log = TrainingLog()
        opt = OptimizerFactoryProvider.get_factory(optimizer).create_optimizer(lr=lr)
        batches_per_epoch = math.ceil(len(corpus) / batch_size)
        for epoch in range(epochs):
            order = rng.permutation(len(corpus))
            epoch_logprobs: list[float] = []
            for batch_index in range(batches_per_epoch):
                batch = [corpus[int(i)] for i in order[batch_index * batch_size : (batch_index + 1) * batch_size]]
                count = sum(max(len(sentence) - 1, 0) for sentence in batch)
                if count == 0:
                    continue
                grad = trained.zeros_like()
                logprobs = []
                for sentence in batch:
                    for t in range(1, len(sentence)):
                        context = sentence[:t]
                        probs = trained.next_dist(context)
                        logprobs.append(float(np.log(probs[sentence[t]])))
                        dlogits = probs.copy()
                        dlogits[sentence[t]] -= 1.0
                        trained.accumulate_grad(context, dlogits, grad, 1.0 / count)
                batch_loss = -sum_log_probs(logprobs) / count
                if not math.isfinite(batch_loss):
                    raise NonFiniteLossError("nll", f"epoch {epoch} batch {batch_index}")
                opt.step(trained.parameters(), grad.parameters())
                epoch_logprobs.extend(logprobs)
            log.losses.append(-sum_log_probs(epoch_logprobs) / targets)
            logger.info("Language model epoch %d: nll=%.4f", epoch, log.losses[-1])
        return trained, log

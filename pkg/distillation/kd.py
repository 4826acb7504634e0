"""
Knowledge-distillation step shared by every method.

The student is trained on teacher outputs computed fresh for each input;
the CE term uses the teacher's argmax as pseudo-label.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from core.exceptions import InvalidArgumentError, NonFiniteLossError
from corpus.vocab import TokenSeq
from learners.classifier import ClassifierModel, accumulate_grad, classifier_forward, classifier_logits, kd_objective
from learners.factories import LearningRateSchedule, Optimizer, OptimizerFactoryProvider


@dataclass(frozen=True)
class KDConfig:
    """
    Student training parameters.

    Attributes
    ----------
    alpha : float
        Weight of the pseudo-label CE term; ``1 - alpha`` weighs the KL term.
    temperature : float
        Softening temperature.
    lr : float
        Student learning rate.
    batch_size : int
        Sequences per student step.
    epochs : int
        Passes over the transfer set.
    optimizer : str
        ``"sgd"`` or ``"adam"``.
    weight_decay : float
        Decoupled weight decay.
    schedule : str
        ``"constant"`` or ``"warmup_linear"``.
    warmup_fraction : float
        Share of steps spent warming up under ``warmup_linear``.
    """

    alpha: float = 0.5
    temperature: float = 5.0
    lr: float = 0.1
    batch_size: int = 64
    epochs: int = 10
    optimizer: str = "sgd"
    weight_decay: float = 0.0
    schedule: str = "constant"
    warmup_fraction: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.temperature <= 0.0:
            raise InvalidArgumentError(f"temperature must be positive, got {self.temperature}")
        if self.lr < 0.0 or self.batch_size < 1 or self.epochs < 0:
            raise InvalidArgumentError("lr must be >= 0, batch_size >= 1 and epochs >= 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise InvalidArgumentError("warmup_fraction must lie in [0, 1)")

    def make_optimizer(self, total_steps: int) -> Optimizer:
        """Build the configured optimizer for a run of ``total_steps`` student steps."""
        schedule = None
        if self.schedule != "constant":
            total = max(1, total_steps)
            schedule = LearningRateSchedule(self.schedule, int(self.warmup_fraction * total), total)
        return OptimizerFactoryProvider.get_factory(self.optimizer).create_optimizer(
            lr=self.lr, weight_decay=self.weight_decay, schedule=schedule
        )


def kd_batch_grad(
    student: ClassifierModel,
    batch: Sequence[TokenSeq],
    teacher: ClassifierModel,
    cfg: KDConfig,
) -> tuple[float, ClassifierModel]:
    """Mean distillation loss over ``batch`` and its gradient as a parameter-shaped model."""
    if not batch:
        raise InvalidArgumentError("student batch must be non-empty")
    grad = student.zeros_like()
    losses = []
    for x in batch:
        teacher_probs = classifier_forward(teacher, x)
        loss, dlogits = kd_objective(
            classifier_logits(student, x), teacher_probs, int(np.argmax(teacher_probs)), cfg.alpha, cfg.temperature
        )
        losses.append(loss)
        accumulate_grad(student, x, dlogits, grad, 1.0 / len(batch))
    return math.fsum(losses) / len(batch), grad


def student_step(
    student: ClassifierModel,
    batch: Sequence[TokenSeq],
    teacher: ClassifierModel,
    cfg: KDConfig,
    optimizer: Optimizer | None = None,
) -> tuple[ClassifierModel, float]:
    """
    One descent step on the mean distillation loss of ``batch``.

    Parameters
    ----------
    student : ClassifierModel
        Updated in place (the caller owns it) and returned.
    batch : Sequence[TokenSeq]
        Non-empty transfer-set inputs.
    teacher : ClassifierModel
        Frozen teacher.
    cfg : KDConfig
        Loss weights and optimizer settings.
    optimizer : Optimizer | None
        Optimizer carrying state across steps; a fresh one is built when omitted.

    Returns
    -------
    tuple[ClassifierModel, float]
        The student and the mean loss before the step.

    Raises
    ------
    NonFiniteLossError
        If a loss term or the gradient is not finite.
    """
    loss, grad = kd_batch_grad(student, batch, teacher, cfg)
    if not math.isfinite(loss):
        raise NonFiniteLossError("kd", f"batch of {len(batch)}")
    (optimizer or cfg.make_optimizer(1)).step(student.parameters(), grad.parameters())
    return student, loss

"""
Abstract Factory pattern implementation for optimizers.

Optimizers update named parameter arrays in place. Both kinds support a
learning-rate schedule and decoupled weight decay; policy-gradient ascent
is expressed by passing the negated gradient.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

import numpy as np

from core.exceptions import InvalidArgumentError, NonFiniteLossError
from core.numerics import FloatArray


@dataclass(frozen=True)
class LearningRateSchedule:
    """
    Multiplier on the base learning rate as a function of the step count.

    Attributes
    ----------
    kind : str
        ``"constant"`` or ``"warmup_linear"`` (linear ramp up over
        ``warmup_steps`` then linear decay to zero at ``total_steps``).
    warmup_steps : int
        Length of the ramp.
    total_steps : int
        Step at which ``warmup_linear`` reaches zero.
    """

    kind: str = "constant"
    warmup_steps: int = 0
    total_steps: int = 0

    KINDS = ("constant", "warmup_linear")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise InvalidArgumentError(f"Unknown schedule: {self.kind}")
        if self.kind == "warmup_linear" and not 0 <= self.warmup_steps < self.total_steps:
            raise InvalidArgumentError("warmup_linear needs 0 <= warmup_steps < total_steps")

    def factor(self, step: int) -> float:
        if self.kind == "constant":
            return 1.0
        if step < self.warmup_steps:
            return (step + 1) / self.warmup_steps
        return max(0.0, (self.total_steps - step) / (self.total_steps - self.warmup_steps))


class Optimizer(ABC):
    """
    Base class for in-place first-order optimizers.

    Parameters
    ----------
    lr : float
        Base learning rate.
    weight_decay : float
        Decoupled decay coefficient applied as ``param -= lr * wd * param``.
    schedule : LearningRateSchedule | None
        Learning-rate multiplier; constant when omitted.
    """

    def __init__(self, lr: float, weight_decay: float = 0.0, schedule: LearningRateSchedule | None = None) -> None:
        if not math.isfinite(lr) or lr < 0.0:
            raise InvalidArgumentError(f"learning rate must be >= 0, got {lr}")
        if weight_decay < 0.0:
            raise InvalidArgumentError(f"weight decay must be >= 0, got {weight_decay}")
        self.lr = lr
        self.weight_decay = weight_decay
        self.schedule = schedule or LearningRateSchedule()
        self.steps = 0

    @property
    def current_lr(self) -> float:
        return self.lr * self.schedule.factor(self.steps)

    def step(self, params: dict[str, FloatArray], grads: dict[str, FloatArray]) -> None:
        """
        Apply one descent step to ``params`` in place.

        Raises
        ------
        NonFiniteLossError
            If any gradient entry is not finite; no parameter is touched.
        """
        for name, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                raise NonFiniteLossError("gradient", f"parameter {name} at step {self.steps}")
        lr = self.current_lr
        for name, param in params.items():
            if self.weight_decay:
                param -= lr * self.weight_decay * param
            self._apply(name, param, grads[name], lr)
        self.steps += 1

    @abstractmethod
    def _apply(self, name: str, param: FloatArray, grad: FloatArray, lr: float) -> None:
        pass


class SGDOptimizer(Optimizer):
    """Plain gradient descent."""

    def _apply(self, name: str, param: FloatArray, grad: FloatArray, lr: float) -> None:
        param -= lr * grad


class AdamOptimizer(Optimizer):
    """Adam with bias-corrected moment estimates kept per parameter name."""

    def __init__(
        self,
        lr: float,
        weight_decay: float = 0.0,
        schedule: LearningRateSchedule | None = None,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        super().__init__(lr, weight_decay, schedule)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._first: dict[str, FloatArray] = {}
        self._second: dict[str, FloatArray] = {}

    def _apply(self, name: str, param: FloatArray, grad: FloatArray, lr: float) -> None:
        first = self._first.setdefault(name, np.zeros_like(param))
        second = self._second.setdefault(name, np.zeros_like(param))
        first *= self.beta1
        first += (1.0 - self.beta1) * grad
        second *= self.beta2
        second += (1.0 - self.beta2) * grad * grad
        t = self.steps + 1
        corrected_first = first / (1.0 - self.beta1**t)
        corrected_second = second / (1.0 - self.beta2**t)
        param -= lr * corrected_first / (np.sqrt(corrected_second) + self.eps)


class OptimizerFactory(ABC):
    """Abstract factory for creating optimizers."""

    @abstractmethod
    def create_optimizer(self, **kwargs: Any) -> Optimizer:
        """
        Create an optimizer.

        Parameters
        ----------
        kwargs : Any
            Keyword arguments forwarded to the optimizer (``lr``,
            ``weight_decay``, ``schedule``).

        Returns
        -------
        Optimizer
            Fresh optimizer with empty state.
        """
        pass


class SGDFactory(OptimizerFactory):
    def create_optimizer(self, **kwargs: Any) -> SGDOptimizer:
        return SGDOptimizer(**kwargs)


class AdamFactory(OptimizerFactory):
    def create_optimizer(self, **kwargs: Any) -> AdamOptimizer:
        return AdamOptimizer(**kwargs)


class OptimizerFactoryProvider:
    """
    Provider for obtaining the appropriate optimizer factory.

    This class acts as a factory of factories, returning the correct
    OptimizerFactory implementation for a configured optimizer name.
    """

    @staticmethod
    def get_factory(kind: str) -> OptimizerFactory:
        """
        Get the factory for the given optimizer name.

        Parameters
        ----------
        kind : str
            ``"sgd"`` or ``"adam"``.

        Returns
        -------
        OptimizerFactory
            Factory instance for the optimizer.

        Raises
        ------
        InvalidArgumentError
            If the optimizer name is unknown.
        """
        factories: dict[str, type[OptimizerFactory]] = {
            "sgd": SGDFactory,
            "adam": AdamFactory,
        }

        factory_class = factories.get(kind)
        if factory_class is None:
            raise InvalidArgumentError(f"Unknown optimizer: {kind}")

        return factory_class()

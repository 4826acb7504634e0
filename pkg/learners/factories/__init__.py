"""Optimizer factories package."""

from .optimizer_factory import (
    AdamFactory,
    AdamOptimizer,
    LearningRateSchedule,
    Optimizer,
    OptimizerFactory,
    OptimizerFactoryProvider,
    SGDFactory,
    SGDOptimizer,
)

__all__ = [
    "AdamFactory",
    "AdamOptimizer",
    "LearningRateSchedule",
    "Optimizer",
    "OptimizerFactory",
    "OptimizerFactoryProvider",
    "SGDFactory",
    "SGDOptimizer",
]

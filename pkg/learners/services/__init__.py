"""Learner services package."""

from .training_service import TrainingLog, TrainingService

__all__ = [
    "TrainingLog",
    "TrainingService",
]

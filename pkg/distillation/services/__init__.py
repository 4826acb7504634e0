"""Distillation services package."""

from .kd_service import KDService, monitor, random_text_corpus

__all__ = [
    "KDService",
    "monitor",
    "random_text_corpus",
]

"""Corpus services package."""

from .corpus_service import CorpusService, Datasets

__all__ = [
    "CorpusService",
    "Datasets",
]

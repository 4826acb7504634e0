"""Evaluation services package."""

from .analysis_service import (
    ABLATION_HEADER,
    ABLATION_VARIANTS,
    KEYWORD_HEADER,
    SWEEP_HEADER,
    AnalysisService,
    Comparison,
    CsvTable,
    KeywordRow,
    TrialRow,
    ablation_configs,
    compare,
    median_agreement,
)

__all__ = [
    "ABLATION_HEADER",
    "ABLATION_VARIANTS",
    "KEYWORD_HEADER",
    "SWEEP_HEADER",
    "AnalysisService",
    "Comparison",
    "CsvTable",
    "KeywordRow",
    "TrialRow",
    "ablation_configs",
    "compare",
    "median_agreement",
]

"""Experiment services package."""

from .pipeline_service import PipelineService, RunOutcome, write_run_report
from .registry_service import RunRegistryService

__all__ = [
    "PipelineService",
    "RunOutcome",
    "RunRegistryService",
    "write_run_report",
]

"""
Run registry service.

This module provides service layer for indexing finished distillation
runs in the database and summarizing them per method.
"""

import logging
import statistics
from collections.abc import Collection
from pathlib import Path

from django.db import DatabaseError, transaction

from evaluation.metrics import MetricsReport
from experiments.models import ExperimentRun

logger = logging.getLogger(__name__)


class RunRegistryService:
    """
    Service for recording and summarizing experiment runs.

    The registry only indexes runs; a failure to write it is logged and
    never fails the run whose reports are already on disk.
    """

    def record(
        self,
        method: str,
        seed: int,
        config_hash: str,
        metrics: MetricsReport,
        report_path: Path,
    ) -> ExperimentRun | None:
        """
        Record a finished run.

        Parameters
        ----------
        method : str
            Distillation method of the run.
        seed : int
            Run seed.
        config_hash : str
            Hash of the run's resolved config.
        metrics : MetricsReport
            Test metrics of the trained student.
        report_path : Path
            Directory holding the run's reports.

        Returns
        -------
        ExperimentRun | None
            The created row, or None if the database is unavailable.
        """
        try:
            with transaction.atomic():
                return ExperimentRun.objects.create(
                    method=method,
                    seed=seed,
                    config_hash=config_hash,
                    accuracy=metrics.accuracy,
                    agreement=metrics.agreement,
                    report_path=str(report_path),
                )
        except DatabaseError as exc:
            logger.warning("Could not record %s seed=%d in the run registry: %s", method, seed, exc)
            return None

    def summary(self, method: str | None = None, config_hashes: Collection[str] | None = None) -> dict[str, float]:
        """
        Median test agreement per method over recorded runs.

        Parameters
        ----------
        method : str | None
            Restrict the summary to one method.
        config_hashes : Collection[str] | None
            Restrict the summary to runs recorded under these config hashes.

        Returns
        -------
        dict[str, float]
            Method name to median agreement; empty if nothing is recorded.
        """
        runs = ExperimentRun.objects.all()
        if method is not None:
            runs = runs.filter(method=method)
        if config_hashes is not None:
            runs = runs.filter(config_hash__in=list(config_hashes))
        by_method: dict[str, list[float]] = {}
        try:
            for name, value in runs.values_list("method", "agreement"):
                by_method.setdefault(name, []).append(value)
        except DatabaseError as exc:
            logger.warning("Could not read the run registry: %s", exc)
            return {}
        return {name: float(statistics.median(values)) for name, values in sorted(by_method.items())}

"""Shared flags and error handling of the experiment commands."""

import json
import logging
from pathlib import Path
from typing import Any

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser

from core.exceptions import DFDError
from distillation.factories import METHODS
from experiments.config import ExperimentConfig, load_config
from experiments.services import PipelineService

logger = logging.getLogger(__name__)

ERROR_FILE = "error.json"


class ExperimentCommand(BaseCommand):
    """
    Base class of the pipeline commands.

    Subclasses implement ``run``. A ``DFDError`` raised by a stage is written
    to ``error.json`` in the output directory and re-raised as a
    ``CommandError`` so the process exits nonzero.
    """

    accepts_method = False

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--config", type=Path, default=None, help="Experiment TOML file (default: DFD_DEFAULT_CONFIG)")
        parser.add_argument("--seed", type=int, default=None, help="Run only this seed")
        parser.add_argument("--out", type=Path, default=None, help="Output directory")
        if self.accepts_method:
            parser.add_argument("--method", choices=METHODS, default=None, help="Distillation method")

    def handle(self, *args: Any, **options: Any) -> None:
        out_dir: Path | None = options["out"]
        try:
            config = self.resolve_config(options)
            out_dir = Path(out_dir or config.output_dir or settings.DFD_OUTPUT_DIR)
            pipeline = PipelineService(config, out_dir, progress=options["verbosity"] > 0)
            self.run(pipeline)
        except DFDError as exc:
            self.write_error(out_dir or Path(settings.DFD_OUTPUT_DIR), exc)
            raise CommandError(str(exc)) from exc

    def resolve_config(self, options: dict[str, Any]) -> ExperimentConfig:
        config = load_config(options["config"] or Path(settings.DFD_DEFAULT_CONFIG))
        return config.with_overrides(seed=options["seed"], method=options.get("method"))

    def write_error(self, out_dir: Path, exc: DFDError) -> None:
        record = {"command": self.command_name, "error_type": type(exc).__name__, "message": str(exc)}
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / ERROR_FILE).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        except OSError as write_exc:
            logger.warning("Could not write %s: %s", out_dir / ERROR_FILE, write_exc)

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def run(self, pipeline: PipelineService) -> None:
        """Run the command's stage."""
        raise NotImplementedError("subclasses of ExperimentCommand must provide a run() method")

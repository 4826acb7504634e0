"""
Experiment pipeline service.

The stages of an experiment, each reading the artifacts of the earlier
ones from the output directory::

    gen_world -> train_teacher -> pretrain_generator -> distill -> eval
                                                     -> sweep, ablate

The world seed pins the world, the datasets, the teacher and the
generator; the run seeds only drive distillation. Every report embeds the
resolved config and its hash.
"""

import csv
import json
import logging
import statistics
from collections.abc import Sequence
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

from django.conf import settings

from core.exceptions import CheckpointError, PrerequisiteError
from core.rng import RngStream, Stream
from corpus.services import CorpusService, Datasets
from corpus.vocab import Vocab, decode
from corpus.world import World, WorldSpec, make_world
from distillation.factories import METHODS, DistillationInputs
from distillation.reports import RunReport
from evaluation.metrics import MetricsReport, accuracy, evaluate_student
from evaluation.services import ABLATION_VARIANTS, AnalysisService, Comparison, median_agreement
from experiments.checkpoint import (
    Checkpoint,
    classifier_blocks,
    classifier_from_blocks,
    generator_checkpoint,
    generator_from_checkpoint,
    load_checkpoint,
    prompter_blocks,
    prompter_from_blocks,
    save_checkpoint,
)
from experiments.config import ExperimentConfig, seed_config
from experiments.services.registry_service import RunRegistryService
from learners.classifier import ClassifierModel, init_student_from_teacher
from learners.language_models import CountLM, NeuralLM, fit_count_lm
from learners.services import TrainingService

logger = logging.getLogger(__name__)

WORLD_FILE = "world.ckpt"
TEACHER_FILE = "teacher.ckpt"
GENERATOR_FILE = "generator.ckpt"
STUDENT_FILE = "student.ckpt"
PROMPTER_FILE = "prompter.ckpt"
PROMPTER_INIT_FILE = "prompter_init.ckpt"

REPORT_HEADER = ("epoch", "loss", "dev_accuracy", "agreement")
PROMPTS_HEADER = ("epoch", "prompt")

PROMPT_METHODS = ("manual", "rl")
SEPARABLE_ACCURACY = 0.9

_INIT_KEY = 0
_TRAIN_KEY = 1


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _cell(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def write_run_report(directory: Path, report: RunReport, vocab: Vocab) -> None:
    """Write ``report.csv`` and, for prompt-driven runs, ``prompts.csv``."""
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "report.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_HEADER)
        for record in report.epochs:
            writer.writerow((record.epoch, f"{record.loss:.6f}", _cell(record.dev_accuracy), _cell(record.agreement)))
    if report.prompts:
        with (directory / "prompts.csv").open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(PROMPTS_HEADER)
            for epoch, prompt in report.prompts:
                writer.writerow((epoch, decode(vocab, prompt)))


@dataclass(frozen=True)
class RunOutcome:
    """Test metrics of one distillation run and where its reports live."""

    method: str
    seed: int
    metrics: MetricsReport
    directory: Path


class PipelineService:
    """
    Service running the experiment stages against one output directory.

    Parameters
    ----------
    config : ExperimentConfig
        Resolved configuration (command-line overrides applied).
    out_dir : Path | None
        Output directory; defaults to ``config.output_dir`` and then to
        ``settings.DFD_OUTPUT_DIR``.
    workers : int | None
        Rollout threads; defaults to ``settings.DFD_THREADS``.
    progress : bool
        Show progress bars in sweeps and ablations.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        out_dir: Path | None = None,
        workers: int | None = None,
        progress: bool = True,
    ) -> None:
        self.config = config
        self.out_dir = Path(out_dir or config.output_dir or settings.DFD_OUTPUT_DIR)
        self.workers = workers
        self.progress = progress
        self.registry = RunRegistryService()

    @property
    def world_seed(self) -> int:
        return self.config.world.seed

    def run_dir(self, method: str, seed: int) -> Path:
        return self.out_dir / "distill" / method / f"seed_{seed}"

    def _base_checkpoint(self, world: World, stream: RngStream) -> Checkpoint:
        return Checkpoint(
            vocab=world.vocab.tokens,
            world=world.spec.to_dict(),
            config_hash=self.config.config_hash,
            rng=stream.to_dict(),
        )

    def _load(self, name: str, artifact: str, command: str) -> Checkpoint:
        path = self.out_dir / name
        if not path.exists():
            raise PrerequisiteError(artifact, command)
        return load_checkpoint(path)

    def _check_world(self, checkpoint: Checkpoint, name: str, world: World) -> None:
        if checkpoint.vocab != world.vocab.tokens or checkpoint.world is None or WorldSpec.from_dict(checkpoint.world) != world.spec:
            raise CheckpointError(f"{name} was produced for a different world; rerun the stages after gen_world")

    # World and data

    def gen_world(self) -> World:
        """
        Realize the world and write ``world.ckpt``.

        The checkpoint meta records how well a keyword counter separates the
        classes on the labeled data.
        """
        world = make_world(self.config.world)
        datasets = self.datasets(world)
        separability = CorpusService().keyword_centroid_accuracy(world, datasets.train + datasets.dev + datasets.test)
        if separability <= SEPARABLE_ACCURACY:
            logger.warning("World seed %d is barely separable: keyword accuracy %.4f", self.world_seed, separability)
        checkpoint = self._base_checkpoint(world, RngStream(self.world_seed, (Stream.WORLD,)))
        checkpoint.meta = {"keyword_accuracy": separability, "num_classes": world.num_classes}
        save_checkpoint(self.out_dir / WORLD_FILE, checkpoint)
        logger.info("World: %d classes, %d tokens, keyword accuracy %.4f", world.num_classes, len(world.vocab), separability)
        return world

    def load_world(self) -> World:
        """
        Rebuild the world recorded in ``world.ckpt``.

        Raises
        ------
        PrerequisiteError
            If ``gen_world`` has not run.
        CheckpointError
            If the checkpoint disagrees with the configured world.
        """
        checkpoint = self._load(WORLD_FILE, "world checkpoint", "gen_world")
        world = make_world(self.config.world)
        self._check_world(checkpoint, WORLD_FILE, world)
        return world

    def datasets(self, world: World) -> Datasets:
        return CorpusService().build_datasets(
            world,
            RngStream(self.world_seed, (Stream.DATA,)),
            self.config.eval.labeled_size,
            self.config.eval.unlabeled_size,
            background_size=self.config.eval.background_size or None,
        )

    # Teacher and generator

    def train_teacher(self) -> ClassifierModel:
        """Train the teacher on the labeled split and write ``teacher.ckpt``."""
        world = self.load_world()
        datasets = self.datasets(world)
        models = self.config.models
        stream = RngStream(self.world_seed, (Stream.TEACHER,))
        initial = ClassifierModel.initialized(
            len(world.vocab),
            world.num_classes,
            models.teacher_dim,
            stream.child(_INIT_KEY).generator(),
            scale=models.init_scale,
            hash_buckets=models.hash_buckets,
        )
        teacher, log = TrainingService().train_classifier_supervised(
            initial,
            datasets.train,
            models.teacher_epochs,
            models.teacher_lr,
            models.teacher_batch_size,
            stream.child(_TRAIN_KEY).generator(),
            optimizer=models.teacher_optimizer,
            dev=datasets.dev,
        )
        dev_accuracy = accuracy(teacher, datasets.dev)
        test_accuracy = accuracy(teacher, datasets.test)
        if dev_accuracy < SEPARABLE_ACCURACY:
            logger.warning("Teacher dev accuracy %.4f is below %.2f", dev_accuracy, SEPARABLE_ACCURACY)
        checkpoint = self._base_checkpoint(world, stream)
        checkpoint.meta = {"dev_accuracy": dev_accuracy, "losses": log.losses, "test_accuracy": test_accuracy}
        checkpoint.blocks = classifier_blocks("teacher", teacher)
        save_checkpoint(self.out_dir / TEACHER_FILE, checkpoint)
        logger.info("Teacher: dev accuracy %.4f, test accuracy %.4f", dev_accuracy, test_accuracy)
        return teacher

    def load_teacher(self, world: World) -> ClassifierModel:
        checkpoint = self._load(TEACHER_FILE, "teacher checkpoint", "train_teacher")
        self._check_world(checkpoint, TEACHER_FILE, world)
        return classifier_from_blocks("teacher", checkpoint.blocks)

    def pretrain_generator(self) -> CountLM:
        """
        Fit the content generator on the unlabeled corpus and write ``generator.ckpt``.

        With ``models.prompter_pretrain_epochs > 0`` the prompter is also
        fitted to the same corpus by maximum likelihood and written to
        ``prompter_init.ckpt``; every reinforced run then starts from it.
        """
        world = self.load_world()
        datasets = self.datasets(world)
        models = self.config.models
        generator = fit_count_lm(datasets.generator_corpus, len(world.vocab), models.generator_order, models.generator_smoothing)
        base = self._base_checkpoint(world, RngStream(self.world_seed, (Stream.DATA, CorpusService.GENERATOR)))
        base.meta = {"checksum": generator.checksum()}
        save_checkpoint(self.out_dir / GENERATOR_FILE, generator_checkpoint(generator, base))
        logger.info("Generator: order %d, %d histories, checksum %s", generator.order, len(generator.counts), generator.checksum()[:12])
        if models.prompter_pretrain_epochs > 0:
            self.pretrain_prompter(world, datasets)
        return generator

    def pretrain_prompter(self, world: World, datasets: Datasets) -> NeuralLM:
        models = self.config.models
        stream = RngStream(self.world_seed, (Stream.PROMPTER,))
        initial = NeuralLM.initialized(len(world.vocab), stream.child(_INIT_KEY).generator(), dim=models.prompter_dim, window=models.prompter_window)
        prompter, log = TrainingService().pretrain_language_model(
            initial,
            datasets.generator_corpus,
            models.prompter_pretrain_epochs,
            models.prompter_pretrain_lr,
            models.prompter_pretrain_batch_size,
            stream.child(_TRAIN_KEY).generator(),
        )
        checkpoint = self._base_checkpoint(world, stream)
        checkpoint.meta = {"losses": log.losses, "window": prompter.window}
        checkpoint.blocks = prompter_blocks("prompter", prompter)
        save_checkpoint(self.out_dir / PROMPTER_INIT_FILE, checkpoint)
        logger.info("Prompter: %d epochs, nll %.4f", models.prompter_pretrain_epochs, log.losses[-1])
        return prompter

    def load_prompter(self, world: World) -> NeuralLM:
        checkpoint = self._load(PROMPTER_INIT_FILE, "pretrained prompter checkpoint", "pretrain_generator")
        self._check_world(checkpoint, PROMPTER_INIT_FILE, world)
        return prompter_from_blocks("prompter", checkpoint.blocks, int(checkpoint.meta["window"]))

    def load_generator(self, world: World) -> CountLM:
        """
        Load the frozen generator.

        Raises
        ------
        CheckpointError
            If the count tables no longer match the recorded checksum.
        """
        checkpoint = self._load(GENERATOR_FILE, "generator checkpoint", "pretrain_generator")
        self._check_world(checkpoint, GENERATOR_FILE, world)
        generator = generator_from_checkpoint(checkpoint)
        if generator.checksum() != checkpoint.meta.get("checksum"):
            raise CheckpointError(f"{GENERATOR_FILE} does not match its recorded checksum")
        return generator

    # Distillation

    def base_inputs(self, needs_generator: bool) -> DistillationInputs:
        """
        Shared inputs of every run; seeds fill in the stream and the prompter.

        Raises
        ------
        PrerequisiteError
            If the world, teacher or (when needed) generator or pretrained
            prompter checkpoint is missing.
        """
        world = self.load_world()
        teacher = self.load_teacher(world)
        generator = self.load_generator(world) if needs_generator else None
        config = self.config
        pretrained = needs_generator and config.models.prompter_pretrain_epochs > 0
        if pretrained:
            prompter = self.load_prompter(world)
        else:
            prompter = NeuralLM.zeros(len(world.vocab), config.models.prompter_dim, config.models.prompter_window)
        return DistillationInputs(
            teacher=teacher,
            student=init_student_from_teacher(teacher, config.models.student_dim),
            kd=config.kd,
            vocab=world.vocab,
            datasets=self.datasets(world),
            stream=RngStream(self.world_seed, (Stream.SYNTHESIS,)),
            rl=config.rl,
            decode=config.decode,
            generator=generator,
            prompter=prompter,
            pretrained_prompter=pretrained,
            class_names=world.spec.class_names,
            template_set=config.eval.template_set,
            random_text_size=config.eval.random_text_size,
            length_range=world.spec.length_range,
        )

    def analysis(self) -> AnalysisService:
        return AnalysisService(self.workers, progress=self.progress)

    def distill(self) -> list[RunOutcome]:
        """
        Distill one student per seed with ``config.method``.

        Each run writes ``report.csv`` (flushed after every epoch),
        ``prompts.csv``, ``summary.json``, ``student.ckpt`` and, for the
        reinforced method, ``prompter.ckpt`` under ``distill/<method>/seed_<n>``.

        Returns
        -------
        list[RunOutcome]
            Test metrics per seed.
        """
        method = self.config.method
        base = self.base_inputs(needs_generator=method in PROMPT_METHODS)
        analysis = self.analysis()
        outcomes = []
        for seed in self.config.seeds:
            directory = self.run_dir(method, seed)
            inputs = replace(base, on_epoch=lambda report, directory=directory: write_run_report(directory, report, base.vocab))
            result, metrics = analysis.run_method(inputs, method, seed)
            resolved = seed_config(self.config, seed)
            write_run_report(directory, result.report, base.vocab)

            stream = RngStream(seed, (Stream.SYNTHESIS,))
            checkpoint = Checkpoint(
                vocab=base.vocab.tokens,
                world=self.config.world.to_dict(),
                config_hash=resolved.config_hash,
                rng=stream.to_dict(),
                meta={"method": method, "seed": seed},
                blocks=classifier_blocks("student", result.student),
            )
            save_checkpoint(directory / STUDENT_FILE, checkpoint)
            if result.prompter is not None:
                prompter_checkpoint = replace(
                    checkpoint,
                    meta={**checkpoint.meta, "window": result.prompter.window},
                    blocks=prompter_blocks("prompter", result.prompter),
                )
                save_checkpoint(directory / PROMPTER_FILE, prompter_checkpoint)

            write_json(
                directory / "summary.json",
                {
                    "config": resolved.to_dict(),
                    "config_hash": resolved.config_hash,
                    "method": method,
                    "metrics": metrics.to_dict(),
                    "completions": result.report.completions,
                    "q_means": result.report.q_means,
                    "seed": seed,
                },
            )
            self.registry.record(method, seed, resolved.config_hash, metrics, directory)
            logger.info("Distilled %s seed=%d: accuracy=%.4f agreement=%.4f", method, seed, metrics.accuracy, metrics.agreement)
            outcomes.append(RunOutcome(method, seed, metrics, directory))
        return outcomes

    def evaluate(self) -> list[RunOutcome]:
        """
        Score the distilled students of ``config.method`` on the test split.

        Writes ``eval.json`` next to each student checkpoint.

        Raises
        ------
        PrerequisiteError
            If a seed's student checkpoint is missing.
        """
        method = self.config.method
        world = self.load_world()
        teacher = self.load_teacher(world)
        datasets = self.datasets(world)
        outcomes = []
        for seed in self.config.seeds:
            directory = self.run_dir(method, seed)
            path = directory / STUDENT_FILE
            if not path.exists():
                raise PrerequisiteError(f"{method} student checkpoint for seed {seed}", f"distill --method {method}")
            checkpoint = load_checkpoint(path)
            self._check_world(checkpoint, STUDENT_FILE, world)
            student = classifier_from_blocks("student", checkpoint.blocks)
            metrics = evaluate_student(teacher, student, datasets.test)
            write_json(
                directory / "eval.json",
                {
                    "config_hash": checkpoint.config_hash,
                    "method": method,
                    "metrics": metrics.to_dict(),
                    "seed": seed,
                    "teacher_accuracy": accuracy(teacher, datasets.test),
                },
            )
            outcomes.append(RunOutcome(method, seed, metrics, directory))
        return outcomes

    def registry_summary(self) -> dict[str, float]:
        """Median agreement per method over the registered runs of this config and its seeds."""
        hashes = {seed_config(replace(self.config, method=method), seed).config_hash for method in METHODS for seed in self.config.seeds}
        return self.registry.summary(config_hashes=hashes)

    # Analyses

    def sweep(self) -> dict[int, float]:
        """
        Prompt-length sweep of the reinforced method over ``eval.sweep_lengths``.

        Writes ``sweep.csv`` row by row and ``sweep_summary.json``. A rerun of
        the same config skips the (length, seed) runs already in ``sweep.csv``.

        Returns
        -------
        dict[int, float]
            Median test agreement per prompt length.
        """
        base = self.base_inputs(needs_generator=True)
        lengths = self.config.eval.sweep_lengths
        rows = self.analysis().prompt_length_sweep(base, lengths, self.config.seeds, self.out_dir / "sweep.csv", self.config.config_hash)
        medians = {length: median_agreement(rows, str(length)) for length in lengths}
        best = max(medians, key=lambda length: medians[length])
        logger.info("Sweep: best median agreement %.4f at prompt length %d", medians[best], best)
        write_json(
            self.out_dir / "sweep_summary.json",
            {
                "best_length": best,
                "config": self.config.to_dict(),
                "config_hash": self.config.config_hash,
                "median_agreement": {str(length): value for length, value in medians.items()},
            },
        )
        return medians

    def ablate(self) -> list[Comparison]:
        """
        Ablation suite plus the word-order and keyword-frequency analyses.

        Writes ``ablation.csv``, ``shuffle.csv``, ``keywords.csv`` and
        ``ablation_summary.json``.

        Returns
        -------
        list[Comparison]
            The full method against each ablation, then ordered against
            shuffled transfer text.
        """
        base = self.base_inputs(needs_generator=True)
        analysis = self.analysis()
        seeds = self.config.seeds
        size = self.config.eval.transfer_size

        rows, comparisons = analysis.ablation_suite(base, seeds, self.out_dir / "ablation.csv")
        _, shuffle = analysis.shuffle_comparison(base, seeds, size, self.out_dir / "shuffle.csv")
        _, synthesized = analysis.synthesize_after_training(base, seeds[0], size)
        analysis.keyword_table(
            {"synthesized": synthesized, "background": base.datasets.background},
            sorted(self._keyword_ids(base)),
            base.vocab,
            self.out_dir / "keywords.csv",
        )

        duplicate_rates = {
            variant: _median([row.duplicate_rate for row in rows if row.variant == variant and row.duplicate_rate is not None])
            for variant in ABLATION_VARIANTS
        }
        write_json(
            self.out_dir / "ablation_summary.json",
            {
                "comparisons": [asdict(comparison) for comparison in [*comparisons, shuffle]],
                "config": self.config.to_dict(),
                "config_hash": self.config.config_hash,
                "duplicate_rate": {variant: {str(row.seed): row.duplicate_rate for row in rows if row.variant == variant} for variant in ABLATION_VARIANTS},
                "median_duplicate_rate": duplicate_rates,
            },
        )
        return [*comparisons, shuffle]

    def _keyword_ids(self, base: DistillationInputs) -> list[int]:
        return [base.vocab.require(word) for words in self.config.world.keywords for word in words]


def _median(values: Sequence[float]) -> float | None:
    return float(statistics.median(values)) if values else None

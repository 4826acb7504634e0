"""
Analysis experiments over distillation runs.

Every experiment repeats a run per seed and reports medians with an exact
sign test: prompt-length sweeps, ablations of the adversarial reward and
the repeat penalty, the word-order (shuffle) ablation and keyword
frequencies of synthesized text. Tables are written as CSV files with
fixed headers.
"""

import csv
import json
import logging
import statistics
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Any

from tqdm import tqdm

from core.exceptions import InvalidArgumentError
from core.rng import RngStream, Stream
from corpus.vocab import TokenSeq, Vocab
from distillation.factories import DistillationInputs, DistillationResult, TransferSourceFactoryProvider
from distillation.kd import KDConfig
from distillation.services import KDService
from evaluation.metrics import MetricsReport, evaluate_student, keyword_frequency, shuffle_ablation, sign_test
from learners.classifier import ClassifierModel
from learners.language_models import NeuralLM
from synthesis.prompter import RewardMode, RLConfig, sample_prompt
from synthesis.services import prompter_sampler, synthesize_transfer_set

logger = logging.getLogger(__name__)

SWEEP_HEADER = ("length", "seed", "accuracy", "agreement", "duplicate_rate")
ABLATION_HEADER = ("variant", "seed", "accuracy", "agreement", "duplicate_rate")
KEYWORD_HEADER = ("keyword", "corpus", "rate_per_1000")
SHUFFLE_HEADER = ("variant", "seed", "accuracy", "agreement")

ABLATION_VARIANTS = ("full", "w/o adversarial", "w/o penalty", "w/o both")

_SHUFFLE_KEY = 0
_SYNTH_KEY = 1
_ORDER_KEY = 2
_DUPLICATE_KEY = 3


@dataclass(frozen=True)
class TrialRow:
    """Test metrics of one (variant, seed) run."""

    variant: str
    seed: int
    accuracy: float
    agreement: float
    duplicate_rate: float | None = None

    def as_csv(self) -> tuple[Any, ...]:
        cells = (self.variant, self.seed, f"{self.accuracy:.6f}", f"{self.agreement:.6f}")
        return cells if self.duplicate_rate is None else (*cells, f"{self.duplicate_rate:.6f}")

    @classmethod
    def from_csv(cls, cells: Sequence[str]) -> "TrialRow":
        duplicate_rate = float(cells[4]) if len(cells) > 4 and cells[4] else None
        return cls(cells[0], int(cells[1]), float(cells[2]), float(cells[3]), duplicate_rate)


@dataclass(frozen=True)
class KeywordRow:
    keyword: str
    corpus: str
    rate_per_1000: float

    def as_csv(self) -> tuple[Any, ...]:
        return (self.keyword, self.corpus, f"{self.rate_per_1000:.6f}")


@dataclass(frozen=True)
class Comparison:
    """
    Seed-paired comparison of two variants on agreement.

    Attributes
    ----------
    first, second : str
        Variant names.
    median_first, median_second : float
        Median agreement over seeds.
    wins, losses : int
        Seeds where ``first`` is strictly better / worse (ties dropped).
    p_value : float
        Exact two-sided sign test.
    """

    first: str
    second: str
    median_first: float
    median_second: float
    wins: int
    losses: int
    p_value: float


def median_agreement(rows: Iterable[TrialRow], variant: str) -> float:
    values = [row.agreement for row in rows if row.variant == variant]
    if not values:
        raise InvalidArgumentError(f"no rows for variant {variant!r}")
    return float(statistics.median(values))


def compare(rows: Sequence[TrialRow], first: str, second: str) -> Comparison:
    """Pair ``first`` and ``second`` by seed and compare their agreement."""
    by_seed = {(row.variant, row.seed): row.agreement for row in rows}
    seeds = sorted({row.seed for row in rows if row.variant == first} & {row.seed for row in rows if row.variant == second})
    if not seeds:
        raise InvalidArgumentError(f"variants {first!r} and {second!r} share no seeds")
    wins = sum(by_seed[first, seed] > by_seed[second, seed] for seed in seeds)
    losses = sum(by_seed[first, seed] < by_seed[second, seed] for seed in seeds)
    return Comparison(first, second, median_agreement(rows, first), median_agreement(rows, second), wins, losses, sign_test(wins, losses))


def ablation_configs(base: RLConfig) -> dict[str, RLConfig]:
    """The full prompter config and its three ablations."""
    no_adversarial = replace(base, reward=RewardMode.TEACHER_ONLY)
    return {
        "full": base,
        "w/o adversarial": no_adversarial,
        "w/o penalty": replace(base, penalty_weight=0.0),
        "w/o both": replace(no_adversarial, penalty_weight=0.0),
    }


class CsvTable:
    """
    CSV file written row by row, so a failing experiment leaves a partial table.

    With a ``resume_key`` the key is stored next to the table in
    ``<stem>_state.json``; a later table opened with the same key and header
    keeps the finished rows (exposed as ``rows``) and appends to them.

    Parameters
    ----------
    path : Path | None
        Output file; ``None`` disables writing.
    header : tuple[str, ...]
        Fixed column names.
    resume_key : str | None
        Identifies the experiment the rows belong to, usually a config hash.
    """

    def __init__(self, path: Path | None, header: tuple[str, ...], resume_key: str | None = None) -> None:
        self.path = path
        self.rows: list[list[str]] = []
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        if resume_key is not None and self._resumable(header, resume_key):
            with path.open(newline="") as handle:
                self.rows = [row for row in list(csv.reader(handle))[1:] if len(row) == len(header)]
            logger.info("Resuming %s with %d finished rows", path.name, len(self.rows))
            return
        with path.open("w", newline="") as handle:
            csv.writer(handle).writerow(header)
        if resume_key is not None:
            self.state_path.write_text(json.dumps({"resume_key": resume_key}) + "\n")

    @property
    def state_path(self) -> Path:
        assert self.path is not None
        return self.path.with_name(f"{self.path.stem}_state.json")

    def _resumable(self, header: tuple[str, ...], resume_key: str) -> bool:
        assert self.path is not None
        if not self.path.exists() or not self.state_path.exists():
            return False
        try:
            state = json.loads(self.state_path.read_text())
        except json.JSONDecodeError:
            return False
        with self.path.open(newline="") as handle:
            first = next(csv.reader(handle), None)
        return first == list(header) and state.get("resume_key") == resume_key

    def append(self, row: tuple[Any, ...]) -> None:
        if self.path is None:
            return
        with self.path.open("a", newline="") as handle:
            csv.writer(handle).writerow(row)


class AnalysisService:
    """
    Service for multi-seed analysis experiments.

    Parameters
    ----------
    workers : int | None
        Rollout threads of prompt-driven runs; defaults to ``settings.DFD_THREADS``.
    progress : bool
        Show a progress bar over runs.
    """

    def __init__(self, workers: int | None = None, progress: bool = True) -> None:
        self.workers = workers
        self.progress = progress

    def seed_inputs(self, base: DistillationInputs, seed: int) -> DistillationInputs:
        """
        Inputs of one seed: fresh run stream and a freshly initialized prompter.

        The prompter takes the dimensions of ``base.prompter`` when given; a
        pretrained ``base.prompter`` is shared by every seed as is.
        """
        if base.pretrained_prompter:
            return replace(base, stream=RngStream(seed, (Stream.SYNTHESIS,)))
        rng = RngStream(seed, (Stream.PROMPTER,)).generator()
        if base.prompter is not None:
            prompter = NeuralLM.initialized(len(base.vocab), rng, dim=base.prompter.embedding.shape[1], window=base.prompter.window)
        else:
            prompter = NeuralLM.initialized(len(base.vocab), rng)
        return replace(base, stream=RngStream(seed, (Stream.SYNTHESIS,)), prompter=prompter)

    def run_method(self, base: DistillationInputs, method: str, seed: int) -> tuple[DistillationResult, MetricsReport]:
        """Distill with ``method`` under ``seed`` and evaluate on the test split."""
        inputs = self.seed_inputs(base, seed)
        result = TransferSourceFactoryProvider.get_factory(method).create_source(workers=self.workers).distill(inputs)
        metrics = evaluate_student(inputs.teacher, result.student, inputs.datasets.test, prompts=self.final_prompts(inputs, result, seed))
        return result, metrics

    def final_prompts(self, inputs: DistillationInputs, result: DistillationResult, seed: int) -> list[TokenSeq]:
        """
        Prompts the duplicate rate is measured on.

        A trained prompter is sampled ``rl.prompts_per_epoch`` times (sample
        ``i`` on child ``i`` of the seed's evaluation stream); other methods
        give the prompts they trained on.
        """
        if result.prompter is None:
            return [prompt for _, prompt in result.report.prompts]
        stream = RngStream(seed, (Stream.EVAL, _DUPLICATE_KEY))
        initial_ids = inputs.rl.initial_ids(inputs.vocab)
        return [
            sample_prompt(result.prompter, inputs.rl.prompt_length, initial_ids, stream.child(i).generator()).prompt.tokens
            for i in range(inputs.rl.prompts_per_epoch)
        ]

    def prompt_length_sweep(
        self,
        base: DistillationInputs,
        lengths: Sequence[int],
        seeds: Sequence[int],
        out_path: Path | None = None,
        resume_key: str | None = None,
    ) -> list[TrialRow]:
        """
        Run the reinforced method per (prompt length, seed).

        Parameters
        ----------
        base : DistillationInputs
            Shared models, data and configs.
        lengths : Sequence[int]
            Prompt lengths (each >= 2).
        seeds : Sequence[int]
            Seeds per length.
        out_path : Path | None
            ``sweep.csv`` destination; rows are flushed as runs finish.
        resume_key : str | None
            When ``out_path`` already holds rows written under this key, those
            (length, seed) cells are read back instead of rerun and new rows
            are appended.

        Returns
        -------
        list[TrialRow]
            One row per run, ``variant`` holding the length.
        """
        if not lengths or not seeds:
            raise InvalidArgumentError("sweep needs at least one length and one seed")
        configs = {length: replace(base.rl, prompt_length=length) for length in lengths}
        table = CsvTable(out_path, SWEEP_HEADER, resume_key)
        done = {(row.variant, row.seed): row for row in map(TrialRow.from_csv, table.rows)}
        rows = []
        for length, seed in tqdm(list(product(lengths, seeds)), desc="sweep", disable=not self.progress):
            if (str(length), seed) in done:
                rows.append(done[str(length), seed])
                continue
            _, metrics = self.run_method(replace(base, rl=configs[length]), "rl", seed)
            row = TrialRow(str(length), seed, metrics.accuracy, metrics.agreement, metrics.duplicate_rate)
            rows.append(row)
            table.append(row.as_csv())
            logger.info("Sweep length=%d seed=%d: agreement=%.4f", length, seed, metrics.agreement)
        for length in lengths:
            logger.info("Sweep length=%d: median agreement=%.4f", length, median_agreement(rows, str(length)))
        return rows

    def ablation_suite(
        self,
        base: DistillationInputs,
        seeds: Sequence[int],
        out_path: Path | None = None,
    ) -> tuple[list[TrialRow], list[Comparison]]:
        """
        Run the full reinforced method and its three ablations per seed.

        Returns
        -------
        tuple[list[TrialRow], list[Comparison]]
            Per-run rows and the full variant compared against each ablation.
        """
        if not seeds:
            raise InvalidArgumentError("ablation needs at least one seed")
        configs = ablation_configs(base.rl)
        table = CsvTable(out_path, ABLATION_HEADER)
        rows = []
        for variant, seed in tqdm(list(product(ABLATION_VARIANTS, seeds)), desc="ablation", disable=not self.progress):
            _, metrics = self.run_method(replace(base, rl=configs[variant]), "rl", seed)
            row = TrialRow(variant, seed, metrics.accuracy, metrics.agreement, metrics.duplicate_rate)
            rows.append(row)
            table.append(row.as_csv())
        comparisons = [compare(rows, "full", variant) for variant in ABLATION_VARIANTS[1:]]
        for comparison in comparisons:
            logger.info(
                "Ablation full vs %s: median %.4f vs %.4f (wins=%d losses=%d p=%.4f)",
                comparison.second,
                comparison.median_first,
                comparison.median_second,
                comparison.wins,
                comparison.losses,
                comparison.p_value,
            )
        return rows, comparisons

    def synthesize_after_training(self, base: DistillationInputs, seed: int, n: int) -> tuple[DistillationResult, list[TokenSeq]]:
        """Train the reinforced method under ``seed``, then complete ``n`` prompts of the trained prompter."""
        if base.generator is None:
            raise InvalidArgumentError("synthesis needs a content generator")
        result, _ = self.run_method(base, "rl", seed)
        assert result.prompter is not None
        sampler = prompter_sampler(result.prompter, base.rl.prompt_length, base.rl.initial_ids(base.vocab))
        samples = synthesize_transfer_set(sampler, base.generator, n, base.decode, RngStream(seed, (Stream.SYNTHESIS, _SYNTH_KEY)))
        return result, [sample.full for sample in samples]

    def shuffle_comparison(
        self,
        base: DistillationInputs,
        seeds: Sequence[int],
        n: int,
        out_path: Path | None = None,
    ) -> tuple[list[TrialRow], Comparison]:
        """
        Distill fresh students on a synthesized set and on its word-shuffled copy.

        Parameters
        ----------
        base : DistillationInputs
            Shared models, data and configs.
        seeds : Sequence[int]
            Seeds; each trains its own prompter.
        n : int
            Size of each synthesized set.
        out_path : Path | None
            CSV destination.

        Returns
        -------
        tuple[list[TrialRow], Comparison]
            ``ordered``/``shuffled`` rows and their comparison.
        """
        if not seeds:
            raise InvalidArgumentError("shuffle comparison needs at least one seed")
        table = CsvTable(out_path, SHUFFLE_HEADER)
        rows = []
        for seed in tqdm(seeds, desc="shuffle", disable=not self.progress):
            _, ordered = self.synthesize_after_training(base, seed, n)
            shuffled = shuffle_ablation(ordered, RngStream(seed, (Stream.EVAL, _SHUFFLE_KEY)).generator())
            for variant, corpus in (("ordered", ordered), ("shuffled", shuffled)):
                student = self.distill_on(base.student, base.teacher, corpus, base.kd, seed)
                metrics = evaluate_student(base.teacher, student, base.datasets.test)
                row = TrialRow(variant, seed, metrics.accuracy, metrics.agreement)
                rows.append(row)
                table.append(row.as_csv())
        return rows, compare(rows, "ordered", "shuffled")

    def distill_on(self, student: ClassifierModel, teacher: ClassifierModel, corpus: Sequence[TokenSeq], kd: KDConfig, seed: int) -> ClassifierModel:
        trained, _ = KDService().distill_with_corpus(
            student, teacher, corpus, kd, RngStream(seed, (Stream.EVAL, _ORDER_KEY)).generator(), method="synthesized"
        )
        return trained

    def keyword_table(
        self,
        corpora: dict[str, Sequence[TokenSeq]],
        keyword_ids: Sequence[int],
        vocab: Vocab,
        out_path: Path | None = None,
    ) -> list[KeywordRow]:
        """Keyword frequency per 1000 tokens of every named corpus."""
        table = CsvTable(out_path, KEYWORD_HEADER)
        rows = []
        for name, corpus in corpora.items():
            for keyword, rate in keyword_frequency(corpus, keyword_ids).items():
                row = KeywordRow(vocab.tokens[keyword], name, rate)
                rows.append(row)
                table.append(row.as_csv())
        return rows

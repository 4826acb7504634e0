"""
Unit tests for the analysis service.

Runs use a small world, a random teacher and one-epoch configs.
"""

import csv
import json
from dataclasses import fields, replace

import numpy as np
import pytest

from core.exceptions import InvalidArgumentError
from core.rng import RngStream
from corpus.services import CorpusService
from corpus.world import WorldSpec, make_world
from distillation.factories import DistillationInputs
from distillation.kd import KDConfig
from evaluation.metrics import duplicate_token_rate
from evaluation.services import (
    ABLATION_HEADER,
    KEYWORD_HEADER,
    SWEEP_HEADER,
    AnalysisService,
    TrialRow,
    ablation_configs,
    compare,
    median_agreement,
)
from learners.classifier import ClassifierModel
from learners.language_models import NeuralLM, fit_count_lm
from synthesis.decoding import DecodeConfig
from synthesis.prompter import RewardMode, RLConfig


def read_csv(path):
    with path.open(newline="") as handle:
        return list(csv.reader(handle))


@pytest.fixture(scope="module")
def base():
    """Provide shared one-epoch inputs on a small world."""
    world = make_world(WorldSpec(seed=6))
    stream = RngStream(801)
    datasets = CorpusService().build_datasets(world, stream.child(0), 60, 60)
    vocab = world.vocab
    return DistillationInputs(
        teacher=ClassifierModel.initialized(len(vocab), world.num_classes, 8, stream.child(1).generator(), scale=0.5, hash_buckets=64),
        student=ClassifierModel.initialized(len(vocab), world.num_classes, 8, stream.child(2).generator(), hash_buckets=64),
        kd=KDConfig(epochs=1, batch_size=4),
        vocab=vocab,
        datasets=datasets,
        stream=stream.child(3),
        rl=RLConfig(prompts_per_epoch=4, prompt_length=3),
        decode=DecodeConfig(max_new_tokens=5),
        generator=fit_count_lm(datasets.generator_corpus, len(vocab)),
        prompter=NeuralLM.initialized(len(vocab), stream.child(4).generator(), dim=4, window=3),
        class_names=world.spec.class_names,
        length_range=world.spec.length_range,
    )


@pytest.fixture
def service():
    """Provide a single-threaded, quiet analysis service."""
    return AnalysisService(workers=1, progress=False)


class TestComparisons:
    """Test cases for compare, median_agreement and ablation_configs."""

    def test_compare_pairs_by_seed(self):
        """
        Test a seed-paired comparison.

        Arrange: Two variants over five seeds, one tie
        Act: Compare them
        Assert: Medians, win/loss counts and the sign-test p-value
        """
        # Arrange
        first = [0.9, 0.8, 0.7, 0.6, 0.5]
        second = [0.8, 0.7, 0.7, 0.5, 0.4]
        rows = [TrialRow("a", seed, 0.5, value) for seed, value in enumerate(first)]
        rows += [TrialRow("b", seed, 0.5, value) for seed, value in enumerate(second)]

        # Act
        comparison = compare(rows, "a", "b")

        # Assert
        assert comparison.median_first == pytest.approx(0.7)
        assert comparison.median_second == pytest.approx(0.7)
        assert (comparison.wins, comparison.losses) == (4, 0)
        assert comparison.p_value == pytest.approx(0.125)

    def test_median_of_unknown_variant(self):
        """Test that a variant without rows is rejected."""
        with pytest.raises(InvalidArgumentError):
            median_agreement([TrialRow("a", 0, 0.5, 0.5)], "b")

    def test_ablations_change_only_their_flags(self):
        """Test that "w/o both" differs from "full" only in the reward mode and penalty weight."""
        configs = ablation_configs(RLConfig(penalty_weight=0.2))

        changed = {f.name for f in fields(RLConfig) if getattr(configs["full"], f.name) != getattr(configs["w/o both"], f.name)}

        assert changed == {"reward", "penalty_weight"}
        assert configs["w/o adversarial"].reward == RewardMode.TEACHER_ONLY
        assert configs["w/o penalty"].penalty_weight == 0.0
        assert configs["w/o penalty"].reward == RewardMode.ADVERSARIAL


class TestRunMethod:
    """Test cases for AnalysisService.run_method and final_prompts."""

    def test_duplicate_rate_is_measured_on_the_trained_prompter(self, base, service):
        """
        Test where the duplicate rate of a reinforced run comes from.

        Arrange: A reinforced run, then its prompter swapped for one that always emits one keyword
        Act: Sample the final prompts of both
        Assert: The run's rate matches its own prompts and the collapsed prompter repeats once per prompt
        """
        # Arrange
        result, metrics = service.run_method(base, "rl", 12)
        collapsed = NeuralLM.zeros(len(base.vocab), dim=4, window=3)
        collapsed.bias[base.vocab.require("sports")] = 50.0

        # Act
        prompts = service.final_prompts(base, result, 12)
        repeated = service.final_prompts(base, replace(result, prompter=collapsed), 12)

        # Assert
        assert len(prompts) == len(repeated) == base.rl.prompts_per_epoch
        assert metrics.duplicate_rate == duplicate_token_rate(prompts)
        assert duplicate_token_rate(repeated) == pytest.approx(1 / 3)

    def test_seeds_share_a_pretrained_prompter(self, base, service):
        """Test that a pretrained prompter reaches every seed unchanged and a plain one is redrawn per seed."""
        pretrained = replace(base, pretrained_prompter=True)

        shared = [service.seed_inputs(pretrained, seed).prompter for seed in (1, 2)]
        fresh = [service.seed_inputs(base, seed).prompter for seed in (1, 2)]

        assert all(prompter is base.prompter for prompter in shared)
        assert not np.array_equal(fresh[0].flat(), fresh[1].flat())
        assert fresh[0].window == base.prompter.window

    def test_manual_prompts_come_from_the_run(self, base, service):
        """Test that a prompter-free run reports the prompts it trained on."""
        result, _ = service.run_method(base, "manual", 12)

        assert service.final_prompts(base, result, 12) == [prompt for _, prompt in result.report.prompts]


class TestPromptLengthSweep:
    """Test cases for AnalysisService.prompt_length_sweep."""

    def test_single_length_matches_direct_run(self, base, service, tmp_path):
        """Test that one length and one seed give one row equal to a direct run and one CSV row."""
        rows = service.prompt_length_sweep(base, [3], [11], out_path=tmp_path / "sweep.csv")
        _, direct = service.run_method(base, "rl", 11)

        assert len(rows) == 1
        assert rows[0].agreement == direct.agreement
        assert rows[0].accuracy == direct.accuracy
        table = read_csv(tmp_path / "sweep.csv")
        assert table[0] == list(SWEEP_HEADER)
        assert table[1][:2] == ["3", "11"]

    def test_row_count_and_determinism(self, base, service):
        """Test one row per (length, seed) and identical rows on repetition."""
        first = service.prompt_length_sweep(base, [2, 4], [1])
        second = service.prompt_length_sweep(base, [2, 4], [1])

        assert [row.variant for row in first] == ["2", "4"]
        assert first == second

    def test_resume_skips_finished_runs(self, base, service, tmp_path, monkeypatch):
        """
        Test that an interrupted sweep picks up where it stopped.

        Arrange: A finished two-cell sweep whose last row is then dropped from the CSV
        Act: Rerun it under the same key, counting the runs made
        Assert: Only the dropped cell runs again and the table is complete once more
        """
        # Arrange
        path = tmp_path / "sweep.csv"
        first = service.prompt_length_sweep(base, [3, 4], [1], out_path=path, resume_key="a")
        lines = path.read_text().splitlines(keepends=True)
        path.write_text("".join(lines[:-1]))
        runs = []
        run_method = service.run_method

        def counted(inputs, method, seed):
            runs.append((inputs.rl.prompt_length, seed))
            return run_method(inputs, method, seed)

        monkeypatch.setattr(service, "run_method", counted)

        # Act
        second = service.prompt_length_sweep(base, [3, 4], [1], out_path=path, resume_key="a")

        # Assert
        assert runs == [(4, 1)]
        assert [row.variant for row in second] == ["3", "4"]
        assert second[0].agreement == pytest.approx(first[0].agreement, abs=1e-6)
        assert second[1] == first[1]
        assert path.read_text().splitlines(keepends=True) == lines

    def test_other_key_starts_over(self, base, service, tmp_path, monkeypatch):
        """Test that rows written under another key are discarded and every cell runs."""
        path = tmp_path / "sweep.csv"
        service.prompt_length_sweep(base, [3], [1], out_path=path, resume_key="a")
        runs = []
        run_method = service.run_method
        monkeypatch.setattr(service, "run_method", lambda inputs, method, seed: runs.append(seed) or run_method(inputs, method, seed))

        service.prompt_length_sweep(base, [3], [1], out_path=path, resume_key="b")

        assert runs == [1]
        assert len(read_csv(path)) == 2
        assert json.loads((tmp_path / "sweep_state.json").read_text()) == {"resume_key": "b"}

    def test_rejects_empty_grid(self, base, service):
        """Test that no lengths or no seeds is rejected."""
        with pytest.raises(InvalidArgumentError):
            service.prompt_length_sweep(base, [], [1])


class TestAblationSuite:
    """Test cases for AnalysisService.ablation_suite."""

    def test_four_variants_per_seed(self, base, service, tmp_path):
        """Test rows, comparisons and the CSV of a one-seed ablation."""
        rows, comparisons = service.ablation_suite(base, [3], out_path=tmp_path / "ablation.csv")

        assert [row.variant for row in rows] == ["full", "w/o adversarial", "w/o penalty", "w/o both"]
        assert all(row.duplicate_rate is not None for row in rows)
        assert [comparison.second for comparison in comparisons] == ["w/o adversarial", "w/o penalty", "w/o both"]
        table = read_csv(tmp_path / "ablation.csv")
        assert table[0] == list(ABLATION_HEADER)
        assert len(table) == 5


class TestShuffleAndKeywords:
    """Test cases for the shuffle comparison and the keyword table."""

    def test_shuffle_comparison_rows(self, base, service):
        """Test that each seed yields an ordered and a shuffled row."""
        rows, comparison = service.shuffle_comparison(base, [5], 8)

        assert [row.variant for row in rows] == ["ordered", "shuffled"]
        assert comparison.first == "ordered"
        assert all(0.0 <= row.agreement <= 1.0 for row in rows)

    def test_keyword_table(self, base, service, tmp_path):
        """Test one row per (corpus, keyword) with word names and rates."""
        vocab = base.vocab
        keywords = [vocab.require("sports"), vocab.require("market")]
        corpora = {"synthesized": [(keywords[0],) * 4], "background": list(base.datasets.background)}

        rows = service.keyword_table(corpora, keywords, vocab, out_path=tmp_path / "keywords.csv")

        assert len(rows) == 4
        assert rows[0].keyword == "sports"
        assert rows[0].corpus == "synthesized"
        assert rows[0].rate_per_1000 == 1000.0
        assert rows[1].rate_per_1000 == 0.0
        assert read_csv(tmp_path / "keywords.csv")[0] == list(KEYWORD_HEADER)

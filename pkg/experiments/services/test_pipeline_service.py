"""
Unit tests for the experiment pipeline service.

All stages run on the smoke config: a small world, a narrow teacher and
one short epoch of distillation.
"""

import csv
import json
import shutil
from dataclasses import replace
from pathlib import Path

import pytest
from django.conf import settings

from core.exceptions import CheckpointError, PrerequisiteError
from experiments.checkpoint import load_checkpoint, save_checkpoint
from experiments.config import load_config, parse_config, seed_config
from experiments.models import ExperimentRun
from experiments.services import PipelineService
from experiments.services.pipeline_service import GENERATOR_FILE, PROMPTER_INIT_FILE, REPORT_HEADER, TEACHER_FILE, WORLD_FILE

SMOKE_CONFIG = Path(settings.BASE_DIR) / "experiments" / "configs" / "smoke.toml"
STAGE_FILES = (WORLD_FILE, TEACHER_FILE, GENERATOR_FILE)


def read_rows(path):
    with path.open(newline="") as handle:
        return list(csv.reader(handle))


def prepare(config, out_dir):
    pipeline = PipelineService(config, out_dir, workers=1, progress=False)
    pipeline.gen_world()
    pipeline.train_teacher()
    pipeline.pretrain_generator()
    return pipeline


@pytest.fixture(scope="module")
def config():
    return load_config(SMOKE_CONFIG)


@pytest.fixture(scope="module")
def prepared(config, tmp_path_factory):
    """Provide an output directory holding the world, teacher and generator checkpoints."""
    out_dir = tmp_path_factory.mktemp("pipeline")
    prepare(config, out_dir)
    return out_dir


def pipeline_for(config, out_dir, method=None):
    if method is not None:
        config = replace(config, method=method)
    return PipelineService(config, out_dir, workers=1, progress=False)


class TestStages:
    """Tests for gen_world, train_teacher and pretrain_generator."""

    def test_checkpoints_written(self, prepared):
        """
        Test that the first three stages write their checkpoints.

        Arrange: Prepared output directory.
        Act: Load the checkpoints.
        Assert: Teacher metrics and generator checksum are recorded.
        """
        # Act
        teacher = load_checkpoint(prepared / TEACHER_FILE)
        generator = load_checkpoint(prepared / GENERATOR_FILE)

        # Assert
        assert 0.0 <= teacher.meta["dev_accuracy"] <= 1.0
        assert len(teacher.meta["losses"]) == 3
        assert len(generator.meta["checksum"]) == 64
        assert teacher.vocab == generator.vocab

    def test_stages_are_reproducible(self, config, prepared, tmp_path):
        """
        Test that rerunning the stages reproduces every checkpoint byte for byte.

        Arrange: Fresh output directory.
        Act: Run the three stages again.
        Assert: Identical files.
        """
        # Act
        prepare(config, tmp_path)

        # Assert
        for name in STAGE_FILES:
            assert (tmp_path / name).read_bytes() == (prepared / name).read_bytes()

    def test_teacher_needs_world(self, config, tmp_path):
        """
        Test that training a teacher without a world asks for gen_world.

        Arrange: Empty output directory.
        Act: Train the teacher.
        Assert: PrerequisiteError naming gen_world.
        """
        # Act & Assert
        with pytest.raises(PrerequisiteError, match="gen_world"):
            pipeline_for(config, tmp_path).train_teacher()

    def test_other_world_rejected(self, config, prepared):
        """
        Test that checkpoints of another world are not reused.

        Arrange: Config with a different world seed.
        Act: Load the world.
        Assert: CheckpointError.
        """
        # Arrange
        other = replace(config, world=replace(config.world, seed=9))

        # Act & Assert
        with pytest.raises(CheckpointError):
            pipeline_for(other, prepared).load_world()

    def test_tampered_generator_rejected(self, config, prepared, tmp_path):
        """
        Test that a generator not matching its checksum is rejected.

        Arrange: Copy of the checkpoints with a wrong recorded checksum.
        Act: Load the generator.
        Assert: CheckpointError.
        """
        # Arrange
        for name in STAGE_FILES:
            shutil.copy(prepared / name, tmp_path / name)
        checkpoint = load_checkpoint(tmp_path / GENERATOR_FILE)
        checkpoint.meta["checksum"] = "0" * 64
        save_checkpoint(tmp_path / GENERATOR_FILE, checkpoint)
        pipeline = pipeline_for(config, tmp_path)

        # Act & Assert
        with pytest.raises(CheckpointError, match="checksum"):
            pipeline.load_generator(pipeline.load_world())


    def test_no_prompter_checkpoint_by_default(self, prepared):
        """Test that the smoke config does not pretrain the prompter."""
        assert not (prepared / PROMPTER_INIT_FILE).exists()

@pytest.mark.django_db
class TestDistill:
    """Tests for PipelineService.distill."""

    def test_rl_run_writes_reports(self, config, prepared):
        """
        Test the files of a reinforced run.

        Arrange: Prepared directory, smoke config.
        Act: Distill with the reinforced method.
        Assert: Report, prompts, summary and checkpoints written; run registered.
        """
        # Act
        outcomes = pipeline_for(config, prepared, "rl").distill()

        # Assert
        assert [outcome.seed for outcome in outcomes] == [0]
        directory = outcomes[0].directory
        report = read_rows(directory / "report.csv")
        assert tuple(report[0]) == REPORT_HEADER
        assert len(report) == 1 + config.kd.epochs
        assert len(read_rows(directory / "prompts.csv")) == 1 + config.rl.prompts_per_epoch
        assert (directory / "student.ckpt").exists()
        assert (directory / "prompter.ckpt").exists()
        assert ExperimentRun.objects.filter(method="rl", seed=0).count() == 1

    def test_summary_reproduces_config(self, config, prepared):
        """
        Test that the run summary embeds the resolved config and its hash.

        Arrange: Finished run.
        Act: Parse the embedded config.
        Assert: It equals the per-seed config and matches the hash.
        """
        # Arrange
        outcome = pipeline_for(config, prepared, "rl").distill()[0]

        # Act
        summary = json.loads((outcome.directory / "summary.json").read_text())
        embedded = parse_config(summary["config"])

        # Assert
        assert embedded == seed_config(replace(config, method="rl"), 0)
        assert summary["config_hash"] == embedded.config_hash
        assert summary["metrics"]["agreement"] == outcome.metrics.agreement
        assert len(summary["q_means"]) == config.kd.epochs
        assert summary["completions"] == config.kd.epochs * config.rl.prompts_per_epoch * ((config.rl.prompt_length - 1) * config.rl.rollouts + 1)

    def test_repeat_run_is_byte_identical(self, config, prepared):
        """
        Test that repeating a run reproduces every report and checkpoint.

        Arrange: Files of a first run.
        Act: Run again into the same directory.
        Assert: Identical bytes.
        """
        # Arrange
        pipeline = pipeline_for(config, prepared, "rl")
        directory = pipeline.distill()[0].directory
        names = ["report.csv", "prompts.csv", "summary.json", "student.ckpt", "prompter.ckpt"]
        first = {name: (directory / name).read_bytes() for name in names}

        # Act
        pipeline.distill()

        # Assert
        for name in names:
            assert (directory / name).read_bytes() == first[name]

    def test_vanilla_run_has_no_prompts(self, config, prepared):
        """
        Test that a fixed-corpus method writes no prompt artifacts.

        Arrange: Prepared directory.
        Act: Distill with vanilla.
        Assert: No prompts.csv, no prompter checkpoint, no duplicate rate.
        """
        # Act
        outcome = pipeline_for(config, prepared, "vanilla").distill()[0]

        # Assert
        assert not (outcome.directory / "prompts.csv").exists()
        assert not (outcome.directory / "prompter.ckpt").exists()
        assert outcome.metrics.duplicate_rate is None

    def test_prompt_method_needs_generator(self, config, prepared, tmp_path):
        """
        Test that prompt-driven distillation asks for pretrain_generator.

        Arrange: Directory with world and teacher only.
        Act: Distill with the manual method.
        Assert: PrerequisiteError naming pretrain_generator.
        """
        # Arrange
        for name in (WORLD_FILE, TEACHER_FILE):
            shutil.copy(prepared / name, tmp_path / name)

        # Act & Assert
        with pytest.raises(PrerequisiteError, match="pretrain_generator"):
            pipeline_for(config, tmp_path, "manual").distill()


@pytest.mark.django_db
class TestEvaluate:
    """Tests for PipelineService.evaluate."""

    def test_matches_distill_metrics(self, config, prepared):
        """
        Test that evaluating a stored student reproduces its run metrics.

        Arrange: Finished unlabel run.
        Act: Evaluate it.
        Assert: Same accuracy and agreement; eval.json written.
        """
        # Arrange
        pipeline = pipeline_for(config, prepared, "unlabel")
        distilled = pipeline.distill()[0]

        # Act
        evaluated = pipeline.evaluate()[0]

        # Assert
        assert evaluated.metrics.accuracy == distilled.metrics.accuracy
        assert evaluated.metrics.agreement == distilled.metrics.agreement
        record = json.loads((evaluated.directory / "eval.json").read_text())
        assert record["method"] == "unlabel"
        assert 0.0 <= record["teacher_accuracy"] <= 1.0

    def test_registry_summary_ignores_other_configs(self, config, prepared):
        """
        Test that the pipeline summary only counts runs of its own config.

        Arrange: One unlabel run of the smoke config and a run of an edited config.
        Act: Summarize through each pipeline.
        Assert: Each summary holds only its own run.
        """
        # Arrange
        own = pipeline_for(config, prepared, "unlabel")
        own_outcome = own.distill()[0]
        other = pipeline_for(replace(config, kd=replace(config.kd, alpha=0.25)), prepared, "unlabel")
        other_outcome = other.distill()[0]

        # Act
        own_summary = own.registry_summary()
        other_summary = other.registry_summary()

        # Assert
        assert own_summary == {"unlabel": own_outcome.metrics.agreement}
        assert other_summary == {"unlabel": other_outcome.metrics.agreement}

    def test_needs_student(self, config, prepared):
        """
        Test that evaluating an undistilled method asks for distill.

        Arrange: No random_text run.
        Act: Evaluate random_text.
        Assert: PrerequisiteError naming distill.
        """
        # Act & Assert
        with pytest.raises(PrerequisiteError, match="distill"):
            pipeline_for(config, prepared, "random_text").evaluate()


class TestAnalyses:
    """Tests for sweep and ablate."""

    def test_sweep_writes_table(self, config, prepared):
        """
        Test the prompt-length sweep outputs.

        Arrange: Smoke config with lengths [3, 4] and one seed.
        Act: Sweep.
        Assert: One median per length, one CSV row per run, summary written.
        """
        # Act
        medians = pipeline_for(config, prepared).sweep()

        # Assert
        assert list(medians) == [3, 4]
        rows = read_rows(prepared / "sweep.csv")
        assert rows[0] == ["length", "seed", "accuracy", "agreement", "duplicate_rate"]
        assert [row[0] for row in rows[1:]] == ["3", "4"]
        summary = json.loads((prepared / "sweep_summary.json").read_text())
        assert summary["best_length"] in (3, 4)
        state = json.loads((prepared / "sweep_state.json").read_text())
        assert state["resume_key"] == config.config_hash

    def test_sweep_rerun_reuses_rows(self, config, prepared):
        """
        Test that rerunning a finished sweep of the same config changes nothing.

        Arrange: A finished sweep.
        Act: Sweep again.
        Assert: Same medians and the same table bytes.
        """
        # Arrange
        pipeline = pipeline_for(config, prepared)
        pipeline.sweep()
        table = (prepared / "sweep.csv").read_bytes()

        # Act
        medians = pipeline.sweep()

        # Assert
        assert (prepared / "sweep.csv").read_bytes() == table
        assert medians == {int(row[0]): float(row[3]) for row in read_rows(prepared / "sweep.csv")[1:]}

    def test_ablate_writes_tables(self, config, prepared):
        """
        Test the ablation, shuffle and keyword outputs.

        Arrange: Smoke config with one seed.
        Act: Ablate.
        Assert: Three ablation comparisons plus the shuffle comparison; every table filled.
        """
        # Act
        comparisons = pipeline_for(config, prepared).ablate()

        # Assert
        assert [comparison.second for comparison in comparisons] == ["w/o adversarial", "w/o penalty", "w/o both", "shuffled"]
        assert len(read_rows(prepared / "ablation.csv")) == 1 + 4
        assert len(read_rows(prepared / "shuffle.csv")) == 1 + 2
        keywords = read_rows(prepared / "keywords.csv")
        assert keywords[0] == ["keyword", "corpus", "rate_per_1000"]
        keyword_count = sum(len(words) for words in config.world.keywords)
        assert len(keywords) == 1 + 2 * keyword_count
        summary = json.loads((prepared / "ablation_summary.json").read_text())
        assert len(summary["comparisons"]) == 4
        assert set(summary["median_duplicate_rate"]) == {"full", "w/o adversarial", "w/o penalty", "w/o both"}
        assert all(len(rates) == len(config.seeds) for rates in summary["duplicate_rate"].values())
        assert all(len(row) == 5 for row in read_rows(prepared / "ablation.csv"))


@pytest.fixture(scope="module")
def pretrained_config(config):
    return replace(config, models=replace(config.models, prompter_pretrain_epochs=2))


@pytest.fixture(scope="module")
def pretrained(pretrained_config, tmp_path_factory):
    """Provide an output directory whose generator stage also pretrained the prompter."""
    out_dir = tmp_path_factory.mktemp("pretrained")
    prepare(pretrained_config, out_dir)
    return out_dir


@pytest.mark.django_db
class TestPretrainedPrompter:
    """Tests for the maximum-likelihood warm start of the prompter."""

    def test_checkpoint_written(self, pretrained_config, pretrained, tmp_path):
        """
        Test the pretrained prompter checkpoint.

        Arrange: Directory prepared with two pretraining epochs.
        Act: Load the checkpoint, then rerun the stages elsewhere.
        Assert: Two falling losses, the configured window, identical bytes on rerun.
        """
        # Act
        checkpoint = load_checkpoint(pretrained / PROMPTER_INIT_FILE)
        prepare(pretrained_config, tmp_path)

        # Assert
        losses = checkpoint.meta["losses"]
        assert len(losses) == 2
        assert losses[1] < losses[0]
        assert checkpoint.meta["window"] == pretrained_config.models.prompter_window
        assert (tmp_path / PROMPTER_INIT_FILE).read_bytes() == (pretrained / PROMPTER_INIT_FILE).read_bytes()

    def test_runs_start_from_the_checkpoint(self, pretrained_config, pretrained):
        """
        Test that reinforced runs share the pretrained prompter.

        Arrange: Directory with a pretrained prompter.
        Act: Build the run inputs and distill one seed.
        Assert: The inputs carry the stored prompter and the run trains it further.
        """
        # Arrange
        pipeline = pipeline_for(pretrained_config, pretrained, "rl")
        stored = pipeline.load_prompter(pipeline.load_world())

        # Act
        base = pipeline.base_inputs(needs_generator=True)
        outcome = pipeline.distill()[0]

        # Assert
        assert base.pretrained_prompter
        assert base.prompter.flat().tolist() == stored.flat().tolist()
        trained = load_checkpoint(outcome.directory / "prompter.ckpt")
        assert trained.blocks["prompter.bias"].tolist() != stored.bias.tolist()

    def test_reinforced_run_needs_checkpoint(self, pretrained_config, pretrained, tmp_path):
        """
        Test that a missing pretrained prompter asks for pretrain_generator.

        Arrange: Directory with every checkpoint except the pretrained prompter.
        Act: Distill with the reinforced method.
        Assert: PrerequisiteError naming pretrain_generator.
        """
        # Arrange
        for name in STAGE_FILES:
            shutil.copy(pretrained / name, tmp_path / name)

        # Act & Assert
        with pytest.raises(PrerequisiteError, match="pretrain_generator"):
            pipeline_for(pretrained_config, tmp_path, "rl").distill()

    def test_fixed_corpus_methods_ignore_it(self, pretrained_config, pretrained, tmp_path):
        """Test that methods without a generator run without the pretrained prompter."""
        for name in (WORLD_FILE, TEACHER_FILE):
            shutil.copy(pretrained / name, tmp_path / name)

        outcome = pipeline_for(pretrained_config, tmp_path, "unlabel").distill()[0]

        assert (outcome.directory / "student.ckpt").exists()

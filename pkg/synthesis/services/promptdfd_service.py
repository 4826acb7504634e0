"""
Prompt-driven data-free distillation.

Each iteration fills a student batch with prompts (from the reinforced
prompter or the manual templates). Every prompt prefix is scored by
completion and every full prompt is completed into a pseudo sample; the
prompter is updated group by group as the batch fills, and one student step
on the completed samples ends the iteration. Rollout work for a prompt runs
on its own derived stream, so results do not depend on thread scheduling.
"""

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

import numpy as np
from django.conf import settings

from core.exceptions import InvalidArgumentError
from core.rng import RngStream
from corpus.vocab import TokenSeq
from corpus.world import LabeledExample
from distillation.kd import KDConfig, student_step
from distillation.reports import EpochRecord, RunReport
from distillation.services import monitor
from learners.classifier import ClassifierModel
from learners.factories import OptimizerFactoryProvider
from learners.language_models import LanguageModel, NeuralLM
from synthesis.decoding import DecodeConfig, SynthSample, complete
from synthesis.manual import ManualPromptSource
from synthesis.prompter import MeanBaseline, Prompt, PromptTrajectory, RLConfig, prompter_update, rollout_q, sample_prompt

logger = logging.getLogger(__name__)

PromptSampler = Callable[[np.random.Generator], Prompt]

T = TypeVar("T")
R = TypeVar("R")

_PROMPT_KEY = 0
_ROLLOUT_KEY = 1
_FINAL_KEY = 2


@dataclass(frozen=True)
class _PromptJob:
    stream: RngStream


def synthesize_transfer_set(
    sampler: PromptSampler,
    generator: LanguageModel,
    n: int,
    decode: DecodeConfig,
    stream: RngStream,
) -> list[SynthSample]:
    """
    Complete ``n`` sampled prompts into pseudo samples.

    Parameters
    ----------
    sampler : PromptSampler
        Draws one prompt from a generator (trained prompter or manual templates).
    generator : LanguageModel
        Frozen content generator.
    n : int
        Number of samples.
    decode : DecodeConfig
        Decoding settings.
    stream : RngStream
        Parent stream; sample ``i`` uses child ``i``.

    Returns
    -------
    list[SynthSample]
        Prompt/content pairs.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    samples = []
    for i in range(n):
        rng = stream.child(i).generator()
        samples.append(complete(generator, sampler(rng).tokens, decode, rng))
    return samples


def prompter_sampler(prompter: NeuralLM, n: int, initial_ids: Sequence[int]) -> PromptSampler:
    """Prompt sampler backed by a (trained) prompter."""
    return lambda rng: sample_prompt(prompter, n, initial_ids, rng).prompt


class PromptDFDService:
    """
    Service running the prompt-driven distillation loop.

    Parameters
    ----------
    workers : int | None
        Threads used for rollouts; defaults to ``settings.DFD_THREADS``.
    """

    def __init__(self, workers: int | None = None) -> None:
        self.workers = max(1, workers if workers is not None else settings.DFD_THREADS)

    def run_promptdfd(
        self,
        teacher: ClassifierModel,
        generator: LanguageModel,
        student: ClassifierModel,
        kd_cfg: KDConfig,
        rl_cfg: RLConfig,
        decode: DecodeConfig,
        initial_ids: Sequence[int],
        stream: RngStream,
        prompter: NeuralLM | None = None,
        manual: ManualPromptSource | None = None,
        dev: Sequence[LabeledExample] = (),
        on_epoch: Callable[[RunReport], None] | None = None,
    ) -> tuple[ClassifierModel, NeuralLM | None, RunReport]:
        """
        Distill ``student`` from ``teacher`` on prompt-driven pseudo samples.

        Exactly one of ``prompter`` (reinforced mode) and ``manual``
        (hand-crafted prompts, no prompter update) must be given.

        An iteration fills one student batch of ``kd_cfg.batch_size``
        prompts. In reinforced mode the batch is drawn in groups of
        ``rl_cfg.accumulate`` prompts; each group is sampled from the policy
        as left by the previous group's update, scored against the student
        of the iteration and then used for one prompter step. The student
        step on the batch's completions closes the iteration.

        Parameters
        ----------
        teacher : ClassifierModel
            Frozen teacher.
        generator : LanguageModel
            Frozen content generator.
        student : ClassifierModel
            Initial student (left untouched).
        kd_cfg : KDConfig
            Student settings; ``batch_size`` prompts are drawn per iteration.
        rl_cfg : RLConfig
            Prompter settings, prompt length and prompts per epoch.
        decode : DecodeConfig
            Completion settings.
        initial_ids : Sequence[int]
            First-token candidates of sampled prompts.
        stream : RngStream
            Parent stream of every random draw in the run.
        prompter : NeuralLM | None
            Initial prompter (left untouched).
        manual : ManualPromptSource | None
            Template prompts.
        dev : Sequence[LabeledExample]
            Optional monitoring split.
        on_epoch : Callable[[RunReport], None] | None
            Called with the report after every epoch.

        Returns
        -------
        tuple[ClassifierModel, NeuralLM | None, RunReport]
            Trained student, trained prompter (``None`` in manual mode) and the report.
        """
        if (prompter is None) == (manual is None):
            raise InvalidArgumentError("give exactly one of a prompter or a manual prompt source")
        trained = student.copy()
        policy = prompter.copy() if prompter is not None else None
        method = "rl" if policy is not None else "manual"
        report = RunReport(method)

        iterations = math.ceil(rl_cfg.prompts_per_epoch / kd_cfg.batch_size)
        student_optimizer = kd_cfg.make_optimizer(kd_cfg.epochs * iterations)
        prompter_optimizer = OptimizerFactoryProvider.get_factory(rl_cfg.optimizer).create_optimizer(lr=rl_cfg.lr)
        baseline = MeanBaseline() if rl_cfg.baseline == "mean" else None

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            for epoch in range(kd_cfg.epochs):
                losses: list[float] = []
                q_values: list[float] = []
                for iteration in range(iterations):
                    size = min(kd_cfg.batch_size, rl_cfg.prompts_per_epoch - iteration * kd_cfg.batch_size)
                    streams = [stream.child(epoch, iteration, i) for i in range(size)]
                    group = rl_cfg.accumulate if policy is not None else size
                    batch: list[TokenSeq] = []
                    for start in range(0, size, group):
                        jobs = [_PromptJob(job_stream) for job_stream in streams[start : start + group]]
                        trajectories = [self._sample(job, rl_cfg, initial_ids, policy, manual) for job in jobs]
                        finals = self._complete_group(pool, jobs, trajectories, teacher, generator, trained, rl_cfg, decode, scored=policy is not None)
                        batch.extend(sample.full for sample in finals)
                        report.prompts.extend((epoch, trajectory.prompt.tokens) for trajectory in trajectories)
                        report.completions += len(finals) + sum(len(samples) for trajectory in trajectories for samples in trajectory.completions)
                        if policy is not None:
                            q_values.extend(q for trajectory in trajectories for q in trajectory.q_values)
                            prompter_update(policy, trajectories, rl_cfg, prompter_optimizer, baseline)

                    trained, loss = student_step(trained, batch, teacher, kd_cfg, student_optimizer)
                    losses.append(loss * len(batch))

                dev_accuracy, dev_agreement = monitor(teacher, trained, dev)
                report.epochs.append(EpochRecord(epoch, math.fsum(losses) / rl_cfg.prompts_per_epoch, dev_accuracy, dev_agreement))
                if q_values:
                    report.q_means.append(math.fsum(q_values) / len(q_values))
                logger.info(
                    "%s epoch %d: loss=%.4f dev_accuracy=%s agreement=%s mean_q=%s",
                    method,
                    epoch,
                    report.epochs[-1].loss,
                    dev_accuracy,
                    dev_agreement,
                    report.q_means[-1] if q_values else None,
                )
                if on_epoch is not None:
                    on_epoch(report)
        return trained, policy, report

    def _sample(
        self,
        job: _PromptJob,
        rl_cfg: RLConfig,
        initial_ids: Sequence[int],
        policy: NeuralLM | None,
        manual: ManualPromptSource | None,
    ) -> PromptTrajectory:
        prompt_rng = job.stream.child(_PROMPT_KEY).generator()
        if policy is not None:
            return sample_prompt(policy, rl_cfg.prompt_length, initial_ids, prompt_rng)
        assert manual is not None
        return PromptTrajectory(manual.sample(prompt_rng), [])

    def _complete_group(
        self,
        pool: ThreadPoolExecutor,
        jobs: Sequence[_PromptJob],
        trajectories: Sequence[PromptTrajectory],
        teacher: ClassifierModel,
        generator: LanguageModel,
        student: ClassifierModel,
        rl_cfg: RLConfig,
        decode: DecodeConfig,
        scored: bool,
    ) -> list[SynthSample]:
        """Fill the Q value of every prefix (when ``scored``) and complete every full prompt."""
        prefixes = [(j, m) for j, trajectory in enumerate(trajectories) for m in range(1, trajectory.prompt.n)] if scored else []

        def score(task: tuple[int, int]) -> tuple[float, list[SynthSample]]:
            j, m = task
            prefix: TokenSeq = trajectories[j].prompt.tokens[: m + 1]
            return rollout_q(prefix, generator, teacher, student, rl_cfg, decode, jobs[j].stream.child(_ROLLOUT_KEY, m).generator())

        def finish(j: int) -> SynthSample:
            return complete(generator, trajectories[j].prompt.tokens, decode, jobs[j].stream.child(_FINAL_KEY).generator())

        for (j, _), (q, samples) in zip(prefixes, self._map(pool, score, prefixes), strict=True):
            trajectories[j].q_values.append(q)
            trajectories[j].completions.append(samples)
        return self._map(pool, finish, range(len(trajectories)))

    def _map(self, pool: ThreadPoolExecutor, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        items = list(items)
        return list(pool.map(fn, items)) if self.workers > 1 else [fn(item) for item in items]

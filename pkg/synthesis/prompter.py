"""
Reinforced topic prompter.

The prompter writes short prefixes token by token. Each prefix is scored by
completing it with the frozen generator and asking the teacher (and, in
adversarial mode, the student) about the result; the prompter is updated by
REINFORCE on those scores plus a penalty that pushes its per-position
action distributions apart.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import InvalidArgumentError, NonFiniteLossError
from core.numerics import FloatArray, sample_categorical
from corpus.vocab import TokenSeq, Vocab
from learners.classifier import ClassifierModel, classifier_forward
from learners.factories import Optimizer
from learners.language_models import LanguageModel, NeuralLM
from synthesis.decoding import DecodeConfig, SynthSample, complete

INITIAL_WORDS = ("The", "It", "To", "There", "What", "This", "All", "If", "We")
PENALTY_EPS = 1e-12


class RewardMode:
    TEACHER_ONLY = "teacher_only"
    ADVERSARIAL = "adversarial"

    CHOICES = (TEACHER_ONLY, ADVERSARIAL)


@dataclass(frozen=True)
class RLConfig:
    """
    Prompter training parameters.

    Attributes
    ----------
    reward : str
        ``"adversarial"`` (teacher minus student confidence at the teacher's
        class) or ``"teacher_only"`` (teacher confidence).
    penalty_weight : float
        Weight of the repeat penalty, which is averaged over position pairs.
    penalty_cap : float
        Divergence at which a position pair stops contributing to the
        penalty gradient; 0 disables the clip.
    lr : float
        Prompter learning rate.
    optimizer : str
        ``"sgd"`` or ``"adam"``.
    rollouts : int
        Completions averaged per prefix score.
    initial_words : tuple[str, ...]
        First prompt token is drawn uniformly from these.
    prompts_per_epoch : int
        Prompts synthesized per student epoch.
    prompt_length : int
        Tokens per prompt.
    baseline : str
        ``"none"`` or ``"mean"`` (moving average of Q subtracted from Q).
    accumulate : int
        Trajectories summed into one prompter step.
    symmetric_penalty : bool
        Use both KL directions in the repeat penalty.
    """

    reward: str = RewardMode.ADVERSARIAL
    penalty_weight: float = 1.0
    penalty_cap: float = 1.0
    lr: float = 0.005
    optimizer: str = "adam"
    rollouts: int = 1
    initial_words: tuple[str, ...] = INITIAL_WORDS
    prompts_per_epoch: int = 512
    prompt_length: int = 6
    baseline: str = "none"
    accumulate: int = 1
    symmetric_penalty: bool = False

    def __post_init__(self) -> None:
        if self.reward not in RewardMode.CHOICES:
            raise InvalidArgumentError(f"Unknown reward mode: {self.reward}")
        if self.penalty_weight < 0.0 or self.penalty_cap < 0.0:
            raise InvalidArgumentError("penalty weight and cap must be >= 0")
        if self.rollouts < 1 or self.accumulate < 1 or self.prompts_per_epoch < 1:
            raise InvalidArgumentError("rollouts, accumulate and prompts_per_epoch must be >= 1")
        if not self.initial_words:
            raise InvalidArgumentError("initial word set must be non-empty")
        if self.prompt_length < 2:
            raise InvalidArgumentError("prompt length must be >= 2")
        if self.baseline not in ("none", "mean"):
            raise InvalidArgumentError(f"Unknown baseline: {self.baseline}")

    def initial_ids(self, vocab: Vocab) -> tuple[int, ...]:
        """Vocabulary ids of the initial words; every word must be known."""
        return tuple(vocab.require(word) for word in self.initial_words)


@dataclass(frozen=True)
class Prompt:
    """Prompt tokens ``p_1 .. p_n``."""

    tokens: TokenSeq

    @property
    def n(self) -> int:
        return len(self.tokens)


@dataclass
class PromptTrajectory:
    """
    One sampled prompt seen as an episode.

    State ``s_t`` is the prefix ``p_1 .. p_t`` and action ``a_t`` is
    ``p_{t+1}``, for ``t = 1 .. n - 1``. ``distributions[t - 1]`` is the
    policy distribution ``a_t`` was drawn from.
    """

    prompt: Prompt
    distributions: list[FloatArray]
    q_values: list[float] = field(default_factory=list)
    completions: list[list[SynthSample]] = field(default_factory=list)

    @property
    def states(self) -> list[TokenSeq]:
        return [self.prompt.tokens[:t] for t in range(1, self.prompt.n)]

    @property
    def actions(self) -> list[int]:
        return list(self.prompt.tokens[1:])

    @property
    def steps(self) -> int:
        return self.prompt.n - 1


def sample_prompt(prompter: LanguageModel, n: int, initial_ids: Sequence[int], rng: np.random.Generator) -> PromptTrajectory:
    """
    Sample a prompt from the raw (unfiltered) policy.

    Parameters
    ----------
    prompter : LanguageModel
        Policy over next tokens.
    n : int
        Prompt length (>= 2).
    initial_ids : Sequence[int]
        Candidates for the first token, drawn uniformly.
    rng : np.random.Generator
        Random source.

    Returns
    -------
    PromptTrajectory
        Prompt and per-step action distributions; Q values unfilled.
    """
    if n < 2:
        raise InvalidArgumentError(f"prompt length must be >= 2, got {n}")
    if not initial_ids:
        raise InvalidArgumentError("initial token set must be non-empty")
    tokens = [int(initial_ids[int(rng.integers(len(initial_ids)))])]
    distributions = []
    for _ in range(n - 1):
        dist = prompter.next_dist(tokens)
        distributions.append(dist)
        tokens.append(sample_categorical(dist, rng))
    return PromptTrajectory(Prompt(tuple(tokens)), distributions)


def reward(x: TokenSeq, teacher: ClassifierModel, student: ClassifierModel, mode: str) -> float:
    """Reward of one synthesized sequence under ``mode``."""
    teacher_probs = classifier_forward(teacher, x)
    chosen = int(np.argmax(teacher_probs))
    if mode == RewardMode.TEACHER_ONLY:
        return float(teacher_probs[chosen])
    return float(teacher_probs[chosen] - classifier_forward(student, x)[chosen])


def rollout_q(
    prefix: TokenSeq,
    generator: LanguageModel,
    teacher: ClassifierModel,
    student: ClassifierModel,
    cfg: RLConfig,
    decode: DecodeConfig,
    rng: np.random.Generator,
) -> tuple[float, list[SynthSample]]:
    """Q estimate for ``prefix`` averaged over ``cfg.rollouts`` completions, with the completions."""
    if not prefix:
        raise InvalidArgumentError("prefix must be non-empty")
    samples = [complete(generator, prefix, decode, rng) for _ in range(cfg.rollouts)]
    rewards = [reward(sample.full, teacher, student, cfg.reward) for sample in samples]
    return math.fsum(rewards) / len(rewards), samples


def q_value(
    prefix: TokenSeq,
    generator: LanguageModel,
    teacher: ClassifierModel,
    student: ClassifierModel,
    cfg: RLConfig,
    decode: DecodeConfig,
    rng: np.random.Generator,
) -> float:
    """
    Score a prefix by completing it.

    Teacher-only mode returns ``max_c T(x)_c`` (in ``[1/C, 1]``); adversarial
    mode returns ``T(x)_c' - S(x)_c'`` with ``c'`` the teacher's argmax (in
    ``[-1, 1]``), averaged over the configured number of rollouts.
    """
    return rollout_q(prefix, generator, teacher, student, cfg, decode, rng)[0]


def _kl_terms(p: FloatArray, q: FloatArray, eps: float) -> tuple[float, FloatArray, FloatArray]:
    """``KL(p || q)`` with an additive floor, and its partials in ``p`` and ``q``."""
    log_p = np.log(p + eps)
    log_q = np.log(q + eps)
    value = math.fsum((p * (log_p - log_q)).tolist())
    return value, log_p - log_q + p / (p + eps), -p / (q + eps)


def repeat_penalty_terms(
    distributions: Sequence[FloatArray],
    symmetric: bool = False,
    eps: float = PENALTY_EPS,
    cap: float | None = None,
) -> tuple[float, list[FloatArray]]:
    """
    ``-sum_{i>j} KL(d_i || d_j)`` and its gradient with respect to each distribution.

    With ``symmetric`` each pair contributes the mean of both directions.
    With ``cap`` each pair contributes ``min(KL, cap)``, so a pair already
    that far apart adds a constant and no gradient.

    Raises
    ------
    InvalidArgumentError
        With fewer than two distributions or a non-positive cap.
    """
    if len(distributions) < 2:
        raise InvalidArgumentError("repeat penalty needs at least two distributions")
    if cap is not None and cap <= 0.0:
        raise InvalidArgumentError(f"penalty cap must be positive, got {cap}")
    weight = 0.5 if symmetric else 1.0
    loss = 0.0
    grads = [np.zeros_like(d) for d in distributions]
    for i in range(len(distributions)):
        for j in range(i):
            directions = [(i, j), (j, i)] if symmetric else [(i, j)]
            terms = [_kl_terms(distributions[a], distributions[b], eps) for a, b in directions]
            value = weight * math.fsum(term[0] for term in terms)
            if cap is not None and value >= cap:
                loss -= cap
                continue
            loss -= value
            for (a, b), (_, d_first, d_second) in zip(directions, terms, strict=True):
                grads[a] -= weight * d_first
                grads[b] -= weight * d_second
    return loss, grads


def penalty_pairs(steps: int) -> int:
    """Number of ordered position pairs ``i > j`` among ``steps`` action distributions."""
    return steps * (steps - 1) // 2


def _repeat_penalty_into(
    prompter: NeuralLM,
    states: Sequence[TokenSeq],
    into: NeuralLM,
    scale: float,
    symmetric: bool,
    cap: float | None = None,
) -> float:
    distributions = [prompter.next_dist(state) for state in states]
    loss, grads = repeat_penalty_terms(distributions, symmetric, cap=cap)
    for state, dist, grad in zip(states, distributions, grads, strict=True):
        # chain rule through the (masked) softmax
        dlogits = dist * (grad - float(np.dot(dist, grad)))
        prompter.accumulate_grad(state, dlogits, into, scale)
    return loss


def repeat_penalty(
    prompter: NeuralLM,
    states: Sequence[TokenSeq],
    symmetric: bool = False,
    cap: float | None = None,
) -> tuple[float, FloatArray]:
    """
    Repeat penalty of a trajectory and its gradient with respect to the prompter.

    Parameters
    ----------
    prompter : NeuralLM
        Policy whose per-state distributions are compared.
    states : Sequence[TokenSeq]
        Trajectory states ``s_1 .. s_{n-1}`` (at least two).
    symmetric : bool
        Average both KL directions per pair.
    cap : float | None
        Clip every pair's divergence at this value; ``None`` keeps the plain sum.

    Returns
    -------
    tuple[float, FloatArray]
        ``L_repeat <= 0`` and its flat gradient aligned with ``prompter.flat()``.
    """
    grad = prompter.zeros_like()
    loss = _repeat_penalty_into(prompter, states, grad, 1.0, symmetric, cap)
    return loss, grad.flat()


class MeanBaseline:
    """Exponential moving average of trajectory-mean Q values."""

    def __init__(self, decay: float = 0.9) -> None:
        self.decay = decay
        self.value: float | None = None

    def current(self) -> float:
        return 0.0 if self.value is None else self.value

    def observe(self, q_mean: float) -> None:
        self.value = q_mean if self.value is None else self.decay * self.value + (1.0 - self.decay) * q_mean


def prompter_update(
    prompter: NeuralLM,
    trajectories: Sequence[PromptTrajectory],
    cfg: RLConfig,
    optimizer: Optimizer,
    baseline: MeanBaseline | None = None,
) -> NeuralLM:
    """
    One policy step on a group of trajectories with Q values filled.

    Ascends ``sum_t (Q_t - b) grad log pi(a_t | s_t)`` and descends
    ``lambda grad L_repeat`` (skipped for single-step prompts). The penalty
    of a trajectory is averaged over its position pairs and every pair's
    divergence is clipped at ``cfg.penalty_cap``. The prompter is updated in
    place and returned.

    Raises
    ------
    NonFiniteLossError
        If a Q value or the resulting gradient is not finite.
    """
    grad = prompter.zeros_like()
    cap = cfg.penalty_cap if cfg.penalty_cap > 0.0 else None
    for trajectory in trajectories:
        if len(trajectory.q_values) != trajectory.steps:
            raise InvalidArgumentError("trajectory Q values are not filled")
        if not all(math.isfinite(q) for q in trajectory.q_values):
            raise NonFiniteLossError("q_value", f"prompt {trajectory.prompt.tokens}")
        shift = baseline.current() if baseline is not None else 0.0
        for state, action, q in zip(trajectory.states, trajectory.actions, trajectory.q_values, strict=True):
            advantage = q - shift
            if advantage == 0.0:
                continue
            dist = prompter.next_dist(state)
            dlogits = -dist
            dlogits[action] += 1.0
            # negated: the optimizer descends
            prompter.accumulate_grad(state, dlogits, grad, -advantage)
        if cfg.penalty_weight > 0.0 and trajectory.steps >= 2:
            scale = cfg.penalty_weight / penalty_pairs(trajectory.steps)
            _repeat_penalty_into(prompter, trajectory.states, grad, scale, cfg.symmetric_penalty, cap)
        if baseline is not None:
            baseline.observe(math.fsum(trajectory.q_values) / trajectory.steps)
    if not all(np.all(np.isfinite(array)) for array in grad.parameters().values()):
        raise NonFiniteLossError("prompter", f"update over {len(trajectories)} prompts")
    optimizer.step(prompter.parameters(), grad.parameters())
    return prompter

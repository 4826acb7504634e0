"""
Stochastic decoding for the frozen content generator.

A prompt is extended token by token from the generator's next-token
distribution after top-k truncation followed by nucleus (top-p) filtering.
"""

import math
from dataclasses import dataclass

import numpy as np

from core.exceptions import InvalidArgumentError
from core.numerics import FloatArray, as_float_array, sample_categorical
from corpus.vocab import DEFAULT_MAX_LEN, EOS_ID, TokenSeq, check_token_seq
from learners.language_models import LanguageModel


@dataclass(frozen=True)
class DecodeConfig:
    """
    Decoding parameters.

    Attributes
    ----------
    top_k : int
        Number of highest-probability tokens kept before the nucleus filter.
    top_p : float
        Nucleus mass threshold in ``(0, 1]``.
    max_new_tokens : int
        Completion budget; ``<eos>`` may stop earlier.
    max_len : int
        Cap on prompt plus content length.
    """

    top_k: int = 50
    top_p: float = 0.95
    max_new_tokens: int = 32
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise InvalidArgumentError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.top_p <= 1.0:
            raise InvalidArgumentError(f"top_p must lie in (0, 1], got {self.top_p}")
        if self.max_new_tokens < 0 or self.max_len < 1:
            raise InvalidArgumentError("max_new_tokens must be >= 0 and max_len >= 1")


@dataclass(frozen=True)
class SynthSample:
    """A prompt and the content the generator wrote after it."""

    prompt: TokenSeq
    content: TokenSeq

    @property
    def full(self) -> TokenSeq:
        return self.prompt + self.content


def filter_top_k_p(dist: FloatArray, cfg: DecodeConfig) -> FloatArray:
    """
    Restrict a distribution to its top-k tokens, then to their nucleus.

    Tokens are ranked by descending probability with ties broken by the
    lower id. Among the top ``k`` the smallest prefix whose cumulative mass
    reaches ``top_p`` is kept, the crossing token included.

    Parameters
    ----------
    dist : FloatArray
        Next-token distribution.
    cfg : DecodeConfig
        Supplies ``top_k`` and ``top_p``.

    Returns
    -------
    FloatArray
        Renormalized distribution over the kept tokens.
    """
    probs = as_float_array(dist)
    order = np.lexsort((np.arange(probs.size), -probs))[: cfg.top_k]
    ranked = probs[order]
    mass_before = np.concatenate(([0.0], np.cumsum(ranked)[:-1]))
    kept = order[(mass_before < cfg.top_p) & (ranked > 0.0)]
    filtered = np.zeros_like(probs)
    filtered[kept] = probs[kept]
    return filtered / math.fsum(filtered[kept].tolist())


def complete(generator: LanguageModel, prompt: TokenSeq, cfg: DecodeConfig, rng: np.random.Generator) -> SynthSample:
    """
    Autoregressively extend ``prompt`` with the generator.

    The prompt is only conditioned on, never resampled. Sampling stops at
    ``<eos>`` (which is not part of the content), after ``max_new_tokens``
    or when the full sequence reaches ``max_len``.

    Raises
    ------
    InvalidArgumentError
        If the prompt is empty, already fills ``max_len`` or holds an id the
        generator does not know.
    """
    if len(prompt) >= cfg.max_len:
        raise InvalidArgumentError(f"prompt length {len(prompt)} must be below max_len {cfg.max_len}")
    check_token_seq(generator.vocab_size, prompt, cfg.max_len)
    context = list(prompt)
    content: list[int] = []
    for _ in range(min(cfg.max_new_tokens, cfg.max_len - len(prompt))):
        token = sample_categorical(filter_top_k_p(generator.next_dist(context), cfg), rng)
        if token == EOS_ID:
            break
        content.append(token)
        context.append(token)
    return SynthSample(tuple(prompt), tuple(content))

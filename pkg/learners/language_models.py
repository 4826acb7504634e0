"""
Next-token models over the shared vocabulary.

``CountLM`` is the frozen content generator: smoothed n-gram counts fitted
once on a broad unlabeled corpus. ``NeuralLM`` is the trainable topic
prompter; it exposes the score-function gradient the policy update needs.
"""

import hashlib
from abc import ABC, abstractmethod
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import InvalidArgumentError
from core.numerics import FloatArray, masked_softmax
from corpus.vocab import BOS_ID, EOS_ID, PAD_ID, TokenSeq

DEFAULT_ORDER = 3
DEFAULT_SMOOTHING = 0.1
DEFAULT_PROMPTER_DIM = 16
DEFAULT_WINDOW = 4


def _keep_mask(vocab_size: int) -> np.ndarray:
    keep = np.ones(vocab_size, dtype=bool)
    keep[PAD_ID] = False
    return keep


class LanguageModel(ABC):
    """Anything that yields a next-token distribution for a context."""

    @property
    @abstractmethod
    def vocab_size(self) -> int: ...

    @abstractmethod
    def next_dist(self, context: Sequence[int]) -> FloatArray:
        """Distribution over the full vocabulary with ``<pad>`` at probability 0."""


@dataclass(eq=False)
class CountLM(LanguageModel):
    """
    Add-k smoothed n-gram model with backoff.

    ``counts`` maps every observed history (length ``0`` to ``order - 1``) to
    its dense next-token count vector. A context is scored with its longest
    observed history; ``add-k`` smoothing is applied to that history's counts.
    Count vectors are read-only once the model is built.
    """

    size: int
    order: int
    smoothing: float
    counts: dict[tuple[int, ...], FloatArray] = field(repr=False)

    def __post_init__(self) -> None:
        if self.order < 1:
            raise InvalidArgumentError(f"order must be >= 1, got {self.order}")
        if self.smoothing <= 0.0:
            raise InvalidArgumentError(f"smoothing must be positive, got {self.smoothing}")
        for vector in self.counts.values():
            vector.setflags(write=False)
        self._keep = _keep_mask(self.size)

    @property
    def vocab_size(self) -> int:
        return self.size

    def history_of(self, context: Sequence[int]) -> tuple[int, ...]:
        """Longest observed history ending the ``<bos>``-padded context."""
        padded = (BOS_ID,) * (self.order - 1) + tuple(context)
        for length in range(self.order - 1, 0, -1):
            history = padded[len(padded) - length :]
            if history in self.counts:
                return history
        return ()

    def next_dist(self, context: Sequence[int]) -> FloatArray:
        history = self.history_of(context)
        counts = self.counts.get(history)
        if counts is None:
            weights = np.ones(self.size)
        else:
            weights = counts + self.smoothing
        weights = np.where(self._keep, weights, 0.0)
        return weights / weights.sum()

    def checksum(self) -> str:
        """Digest of the count tables, used to show the generator stayed frozen."""
        digest = hashlib.sha256()
        digest.update(f"{self.size}:{self.order}:{self.smoothing!r}".encode())
        for history in sorted(self.counts):
            digest.update(repr(history).encode())
            digest.update(self.counts[history].tobytes())
        return digest.hexdigest()

    def to_blocks(self) -> dict[str, FloatArray]:
        """
        Dense array form for checkpoints.

        ``histories`` has one row per history: its length followed by the
        history ids padded with -1 to ``order - 1``.
        """
        ordered = sorted(self.counts, key=lambda h: (len(h), h))
        histories = np.full((len(ordered), self.order), -1.0)
        table = np.zeros((len(ordered), self.size))
        for row, history in enumerate(ordered):
            histories[row, 0] = len(history)
            histories[row, 1 : 1 + len(history)] = history
            table[row] = self.counts[history]
        return {"histories": histories, "counts": table}

    @classmethod
    def from_blocks(cls, size: int, order: int, smoothing: float, blocks: dict[str, FloatArray]) -> "CountLM":
        counts: dict[tuple[int, ...], FloatArray] = {}
        for row, table in zip(blocks["histories"], blocks["counts"], strict=True):
            length = int(row[0])
            counts[tuple(int(token) for token in row[1 : 1 + length])] = np.array(table, dtype=np.float64)
        return cls(size=size, order=order, smoothing=smoothing, counts=counts)


def fit_count_lm(
    corpus: Iterable[TokenSeq],
    vocab_size: int,
    order: int = DEFAULT_ORDER,
    smoothing: float = DEFAULT_SMOOTHING,
) -> CountLM:
    """
    Count n-grams of every length up to ``order``.

    Each sequence is left-padded with ``order - 1`` ``<bos>`` tokens and
    terminated with ``<eos>``.

    Parameters
    ----------
    corpus : Iterable[TokenSeq]
        Non-empty unlabeled corpus.
    vocab_size : int
        Size of the shared vocabulary.
    order : int
        N-gram order.
    smoothing : float
        Add-k constant.

    Returns
    -------
    CountLM
        Frozen generator.

    Raises
    ------
    InvalidArgumentError
        If the corpus is empty or contains an id outside the vocabulary.
    """
    tallies: Counter[tuple[tuple[int, ...], int]] = Counter()
    sequences = 0
    for sequence in corpus:
        sequences += 1
        padded = (BOS_ID,) * (order - 1) + tuple(sequence) + (EOS_ID,)
        for i in range(order - 1, len(padded)):
            target = padded[i]
            if not 0 <= target < vocab_size:
                raise InvalidArgumentError(f"token id {target} outside vocabulary of size {vocab_size}")
            for length in range(order):
                tallies[(padded[i - length : i], target)] += 1
    if sequences == 0:
        raise InvalidArgumentError("cannot fit a language model on an empty corpus")

    counts: dict[tuple[int, ...], FloatArray] = {}
    for (history, target), count in tallies.items():
        if history not in counts:
            counts[history] = np.zeros(vocab_size)
        counts[history][target] += count
    return CountLM(size=vocab_size, order=order, smoothing=smoothing, counts=counts)


@dataclass(eq=False)
class NeuralLM(LanguageModel):
    """
    Windowed neural next-token model.

    With ``h = [e(last token); mean of the last w embeddings]``,
    ``logits = U e(last) + V_w mean + bias``. An empty context is read as a
    single ``<bos>``.

    Attributes
    ----------
    embedding : FloatArray
        ``(V, d)`` token embeddings.
    last_weights : FloatArray
        ``(V, d)`` projection of the last-token embedding.
    context_weights : FloatArray
        ``(V, d)`` projection of the window mean.
    bias : FloatArray
        ``(V,)`` output bias.
    window : int
        Number of trailing tokens averaged into the context half of ``h``.
    """

    embedding: FloatArray
    last_weights: FloatArray
    context_weights: FloatArray
    bias: FloatArray
    window: int = DEFAULT_WINDOW

    PARAM_NAMES = ("embedding", "last_weights", "context_weights", "bias")

    def __post_init__(self) -> None:
        if self.window < 1:
            raise InvalidArgumentError(f"window must be >= 1, got {self.window}")
        self._keep = _keep_mask(self.vocab_size)

    @classmethod
    def zeros(cls, vocab_size: int, dim: int = DEFAULT_PROMPTER_DIM, window: int = DEFAULT_WINDOW) -> "NeuralLM":
        if vocab_size < 2 or dim < 1:
            raise InvalidArgumentError("prompter needs vocab_size >= 2 and dim >= 1")
        return cls(
            embedding=np.zeros((vocab_size, dim)),
            last_weights=np.zeros((vocab_size, dim)),
            context_weights=np.zeros((vocab_size, dim)),
            bias=np.zeros(vocab_size),
            window=window,
        )

    @classmethod
    def initialized(
        cls,
        vocab_size: int,
        rng: np.random.Generator,
        dim: int = DEFAULT_PROMPTER_DIM,
        window: int = DEFAULT_WINDOW,
        scale: float = 0.1,
    ) -> "NeuralLM":
        model = cls.zeros(vocab_size, dim, window)
        for name in ("embedding", "last_weights", "context_weights"):
            array = getattr(model, name)
            array[:] = rng.normal(0.0, scale, array.shape)
        return model

    @property
    def vocab_size(self) -> int:
        return int(self.embedding.shape[0])

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[1])

    def parameters(self) -> dict[str, FloatArray]:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def copy(self) -> "NeuralLM":
        return NeuralLM(*(array.copy() for array in self.parameters().values()), window=self.window)

    def zeros_like(self) -> "NeuralLM":
        return NeuralLM(*(np.zeros_like(array) for array in self.parameters().values()), window=self.window)

    def flat(self) -> FloatArray:
        return np.concatenate([array.ravel() for array in self.parameters().values()])

    def with_flat(self, vector: FloatArray) -> "NeuralLM":
        model = self.zeros_like()
        offset = 0
        for array in model.parameters().values():
            array.ravel()[:] = vector[offset : offset + array.size]
            offset += array.size
        if offset != vector.size:
            raise InvalidArgumentError(f"expected {offset} parameters, got {vector.size}")
        return model

    def _features(self, context: Sequence[int]) -> tuple[int, list[int], FloatArray, FloatArray]:
        tokens = tuple(context) or (BOS_ID,)
        last = tokens[-1]
        window = list(tokens[-self.window :])
        return last, window, self.embedding[last], self.embedding[window].mean(axis=0)

    def logits(self, context: Sequence[int]) -> FloatArray:
        _, _, e_last, e_mean = self._features(context)
        return self.last_weights @ e_last + self.context_weights @ e_mean + self.bias

    def next_dist(self, context: Sequence[int]) -> FloatArray:
        return masked_softmax(self.logits(context), self._keep)

    def accumulate_grad(self, context: Sequence[int], dlogits: FloatArray, into: "NeuralLM", scale: float = 1.0) -> None:
        """Backpropagate a logit gradient and add ``scale`` times the result to ``into``."""
        last, window, e_last, e_mean = self._features(context)
        g = scale * dlogits
        into.bias += g
        into.last_weights += np.outer(g, e_last)
        into.context_weights += np.outer(g, e_mean)
        into.embedding[last] += self.last_weights.T @ g
        np.add.at(into.embedding, window, (self.context_weights.T @ g) / len(window))

    def logprob_grad(self, context: Sequence[int], action: int) -> tuple[float, "NeuralLM"]:
        """Log-probability of ``action`` and its gradient as a parameter-shaped model."""
        probs = self.next_dist(context)
        if not 0 <= action < self.vocab_size or probs[action] <= 0.0:
            raise InvalidArgumentError(f"action {action} has zero probability")
        dlogits = -probs
        dlogits[action] += 1.0
        grad = self.zeros_like()
        self.accumulate_grad(context, dlogits, grad)
        return float(np.log(probs[action])), grad


def lm_next_dist(lm: LanguageModel, context: Sequence[int]) -> FloatArray:
    """
    Next-token distribution of either model kind.

    Parameters
    ----------
    lm : LanguageModel
        ``CountLM`` or ``NeuralLM``.
    context : Sequence[int]
        Possibly empty context, read as ``<bos>`` padding.

    Returns
    -------
    FloatArray
        Distribution over the vocabulary with ``<pad>`` masked to 0.
    """
    return lm.next_dist(context)


def lm_logprob_grad(lm: NeuralLM, context: Sequence[int], action: int) -> tuple[float, FloatArray]:
    """
    Score function of the prompter.

    Returns
    -------
    tuple[float, FloatArray]
        ``log p(action | context)`` and its flat gradient aligned with ``lm.flat()``.

    Raises
    ------
    InvalidArgumentError
        If ``action`` has zero probability (``<pad>`` or out of range).
    """
    logprob, grad = lm.logprob_grad(context, action)
    return logprob, grad.flat()

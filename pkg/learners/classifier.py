"""
Bag-of-embeddings + hashed-bigram text classifier with manual gradients.

The same architecture serves the teacher and the (narrower) student:

    pooled(x) = mean_i E[x_i] + mean_j B[hash(x_j, x_{j+1})]
    logits    = W_out pooled(x) + bias

The bigram term makes the model sensitive to word order.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from core.exceptions import InvalidArgumentError, NonFiniteLossError
from core.numerics import FloatArray, log_softmax, softmax
from corpus.vocab import check_token_seq

DEFAULT_HASH_BUCKETS = 4096
PROB_FLOOR = 1e-300

_HASH_A = 0x9E3779B1
_HASH_B = 0x85EBCA77
_MASK32 = 0xFFFFFFFF


def bigram_bucket(first: int, second: int, buckets: int) -> int:
    """Multiplicative hash of an ordered token pair into ``buckets`` slots."""
    return (((first * _HASH_A) ^ (second * _HASH_B)) & _MASK32) % buckets


@dataclass(eq=False)
class ClassifierModel:
    """
    Parameters of a classifier.

    Attributes
    ----------
    embedding : FloatArray
        ``(V, d)`` unigram embeddings.
    bigram : FloatArray
        ``(H, d)`` hashed-bigram embeddings.
    output : FloatArray
        ``(C, d)`` output weights.
    bias : FloatArray
        ``(C,)`` output bias.
    """

    embedding: FloatArray
    bigram: FloatArray
    output: FloatArray
    bias: FloatArray

    PARAM_NAMES = ("embedding", "bigram", "output", "bias")

    @classmethod
    def zeros(cls, vocab_size: int, num_classes: int, dim: int, hash_buckets: int = DEFAULT_HASH_BUCKETS) -> "ClassifierModel":
        if min(vocab_size, num_classes, dim, hash_buckets) < 1:
            raise InvalidArgumentError("classifier dimensions must be positive")
        return cls(
            embedding=np.zeros((vocab_size, dim)),
            bigram=np.zeros((hash_buckets, dim)),
            output=np.zeros((num_classes, dim)),
            bias=np.zeros(num_classes),
        )

    @classmethod
    def initialized(
        cls,
        vocab_size: int,
        num_classes: int,
        dim: int,
        rng: np.random.Generator,
        scale: float = 0.1,
        hash_buckets: int = DEFAULT_HASH_BUCKETS,
    ) -> "ClassifierModel":
        """Gaussian initialization with standard deviation ``scale`` (bias zero)."""
        model = cls.zeros(vocab_size, num_classes, dim, hash_buckets)
        model.embedding[:] = rng.normal(0.0, scale, model.embedding.shape)
        model.bigram[:] = rng.normal(0.0, scale, model.bigram.shape)
        model.output[:] = rng.normal(0.0, scale, model.output.shape)
        return model

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.output.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.embedding.shape[0])

    @property
    def hash_buckets(self) -> int:
        return int(self.bigram.shape[0])

    def parameters(self) -> dict[str, FloatArray]:
        """Named parameter arrays (live views, updated in place by optimizers)."""
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(*(array.copy() for array in self.parameters().values()))

    def zeros_like(self) -> "ClassifierModel":
        return ClassifierModel(*(np.zeros_like(array) for array in self.parameters().values()))

    def flat(self) -> FloatArray:
        """Concatenate all parameters into one vector (the gradient layout)."""
        return np.concatenate([array.ravel() for array in self.parameters().values()])

    def with_flat(self, vector: FloatArray) -> "ClassifierModel":
        """Return a copy whose parameters are read from ``vector``."""
        model = self.zeros_like()
        offset = 0
        for array in model.parameters().values():
            array.ravel()[:] = vector[offset : offset + array.size]
            offset += array.size
        if offset != vector.size:
            raise InvalidArgumentError(f"expected {offset} parameters, got {vector.size}")
        return model

    @property
    def param_count(self) -> int:
        return sum(array.size for array in self.parameters().values())


def _bigram_ids(model: ClassifierModel, x: Sequence[int]) -> list[int]:
    buckets = model.hash_buckets
    return [bigram_bucket(x[i], x[i + 1], buckets) for i in range(len(x) - 1)]


def _pooled(model: ClassifierModel, x: Sequence[int]) -> tuple[FloatArray, list[int]]:
    check_token_seq(model.vocab_size, x)
    pooled = model.embedding[list(x)].mean(axis=0)
    bigrams = _bigram_ids(model, x)
    if bigrams:
        pooled = pooled + model.bigram[bigrams].mean(axis=0)
    return pooled, bigrams


def classifier_logits(model: ClassifierModel, x: Sequence[int]) -> FloatArray:
    """Class scores ``W_out pooled(x) + bias``."""
    pooled, _ = _pooled(model, x)
    return model.output @ pooled + model.bias


def classifier_forward(model: ClassifierModel, x: Sequence[int]) -> FloatArray:
    """
    Class probabilities for one token sequence.

    Parameters
    ----------
    model : ClassifierModel
        Teacher or student.
    x : Sequence[int]
        Non-empty token ids.

    Returns
    -------
    FloatArray
        Probability vector of length C (temperature 1).

    Raises
    ------
    InvalidArgumentError
        If ``x`` is empty, longer than the maximum length or holds an id
        outside the vocabulary.
    """
    return softmax(classifier_logits(model, x))


def predict(model: ClassifierModel, x: Sequence[int]) -> int:
    """Argmax class (ties to the lowest index)."""
    return int(np.argmax(classifier_logits(model, x)))


def soften(probs: FloatArray, temperature: float) -> FloatArray:
    """Re-temper a probability vector: ``softmax(log p / temperature)``."""
    return softmax(np.log(np.maximum(probs, PROB_FLOOR)), temperature)


def kd_objective(
    student_logits: FloatArray,
    teacher_probs: FloatArray,
    pseudo_label: int,
    alpha: float,
    temperature: float,
) -> tuple[float, FloatArray]:
    """
    Distillation loss and its gradient with respect to the student logits.

    ``alpha * CE(S(x), y) + (1 - alpha) * tau^2 * KL(soften(T, tau) || soften(S, tau))``.
    A term whose weight is zero is skipped entirely.

    Raises
    ------
    NonFiniteLossError
        If the CE or KL term is not finite; ``term`` names which one.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1], got {alpha}")
    if temperature <= 0.0:
        raise InvalidArgumentError(f"temperature must be positive, got {temperature}")
    if not np.all(np.isfinite(student_logits)):
        raise NonFiniteLossError("ce" if alpha > 0.0 else "kl", "student logits are not finite")
    if alpha < 1.0 and not np.all(np.isfinite(teacher_probs)):
        raise NonFiniteLossError("kl", "teacher probabilities are not finite")
    student_probs = softmax(student_logits)
    loss = 0.0
    dlogits = np.zeros_like(student_logits)
    if alpha > 0.0:
        ce = -float(log_softmax(student_logits)[pseudo_label])
        if not math.isfinite(ce):
            raise NonFiniteLossError("ce", f"label {pseudo_label}")
        loss += alpha * ce
        dlogits += alpha * student_probs
        dlogits[pseudo_label] -= alpha
    if alpha < 1.0:
        soft_teacher = soften(teacher_probs, temperature)
        soft_student = soften(student_probs, temperature)
        kl = math.fsum((soft_teacher * (np.log(soft_teacher) - np.log(soft_student))).tolist())
        if not math.isfinite(kl):
            raise NonFiniteLossError("kl", f"temperature {temperature}")
        loss += (1.0 - alpha) * temperature**2 * kl
        dlogits += (1.0 - alpha) * temperature * (soft_student - soft_teacher)
    return loss, dlogits


def accumulate_grad(
    model: ClassifierModel,
    x: Sequence[int],
    dlogits: FloatArray,
    into: ClassifierModel,
    scale: float = 1.0,
) -> None:
    """Backpropagate ``dlogits`` through the model and add ``scale`` times the result to ``into``."""
    pooled, bigrams = _pooled(model, x)
    g = scale * dlogits
    into.output += np.outer(g, pooled)
    into.bias += g
    dpooled = model.output.T @ g
    np.add.at(into.embedding, list(x), dpooled / len(x))
    if bigrams:
        np.add.at(into.bigram, bigrams, dpooled / len(bigrams))


def classifier_kd_grad(
    student: ClassifierModel,
    x: Sequence[int],
    teacher_probs: FloatArray,
    pseudo_label: int,
    alpha: float,
    temperature: float,
) -> tuple[float, FloatArray]:
    """
    Distillation loss on one sequence and its gradient over all student parameters.

    Parameters
    ----------
    student : ClassifierModel
        Model being trained.
    x : Sequence[int]
        Input sequence.
    teacher_probs : FloatArray
        Teacher output ``T(x)`` at temperature 1.
    pseudo_label : int
        Label used by the CE term (the teacher's argmax in the data-free setting).
    alpha : float
        Weight of the CE term in ``[0, 1]``.
    temperature : float
        Softening temperature of the KL term.

    Returns
    -------
    tuple[float, FloatArray]
        Loss and flat gradient aligned with ``student.flat()``.
    """
    loss, dlogits = kd_objective(classifier_logits(student, x), teacher_probs, pseudo_label, alpha, temperature)
    grad = student.zeros_like()
    accumulate_grad(student, x, dlogits, grad)
    return loss, grad.flat()


def classifier_ce_grad(model: ClassifierModel, x: Sequence[int], label: int) -> tuple[float, FloatArray]:
    """Supervised cross-entropy on one sequence and its flat gradient."""
    logits = classifier_logits(model, x)
    loss = -float(log_softmax(logits)[label])
    dlogits = softmax(logits)
    dlogits[label] -= 1.0
    grad = model.zeros_like()
    accumulate_grad(model, x, dlogits, grad)
    return loss, grad.flat()


def init_student_from_teacher(teacher: ClassifierModel, student_dim: int) -> ClassifierModel:
    """
    Initialize a narrower student from the teacher's leading embedding columns.

    Parameters
    ----------
    teacher : ClassifierModel
        Trained teacher of width ``d``.
    student_dim : int
        Student width ``d_s`` with ``1 <= d_s <= d``.

    Returns
    -------
    ClassifierModel
        Copy of the first ``d_s`` columns of every d-indexed table; bias copied.

    Raises
    ------
    InvalidArgumentError
        If ``student_dim`` exceeds the teacher width or is not positive.
    """
    if not 1 <= student_dim <= teacher.dim:
        raise InvalidArgumentError(f"student dim must lie in [1, {teacher.dim}], got {student_dim}")
    return ClassifierModel(
        embedding=teacher.embedding[:, :student_dim].copy(),
        bigram=teacher.bigram[:, :student_dim].copy(),
        output=teacher.output[:, :student_dim].copy(),
        bias=teacher.bias.copy(),
    )

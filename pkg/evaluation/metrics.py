"""
Evaluation metrics for distilled students and synthesized corpora.
"""

import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from core.exceptions import InvalidArgumentError
from corpus.vocab import TokenSeq
from corpus.world import LabeledExample
from learners.classifier import ClassifierModel, predict


def _require_non_empty(items: Sequence[Any], what: str) -> None:
    if not items:
        raise InvalidArgumentError(f"{what} must be non-empty")


def accuracy(model: ClassifierModel, examples: Sequence[LabeledExample]) -> float:
    """Fraction of examples whose argmax prediction equals the label."""
    _require_non_empty(examples, "evaluation set")
    return sum(predict(model, example.x) == example.y for example in examples) / len(examples)


def agreement(teacher: ClassifierModel, student: ClassifierModel, inputs: Sequence[TokenSeq]) -> float:
    """Fraction of inputs on which teacher and student argmax predictions coincide."""
    _require_non_empty(inputs, "evaluation set")
    return sum(predict(teacher, x) == predict(student, x) for x in inputs) / len(inputs)


def per_class_accuracy(model: ClassifierModel, examples: Sequence[LabeledExample]) -> dict[int, float]:
    """Accuracy restricted to each label present in ``examples``."""
    _require_non_empty(examples, "evaluation set")
    totals: Counter[int] = Counter()
    correct: Counter[int] = Counter()
    for example in examples:
        totals[example.y] += 1
        correct[example.y] += predict(model, example.x) == example.y
    return {label: correct[label] / totals[label] for label in sorted(totals)}


def keyword_frequency(corpus: Sequence[TokenSeq], keywords: Iterable[int]) -> dict[int, float]:
    """
    Occurrences of each keyword per 1000 corpus tokens.

    Parameters
    ----------
    corpus : Sequence[TokenSeq]
        Non-empty corpus.
    keywords : Iterable[int]
        Keyword ids.

    Returns
    -------
    dict[int, float]
        Rate per keyword id (0 for absent keywords).
    """
    _require_non_empty(corpus, "corpus")
    counts = Counter(token for sequence in corpus for token in sequence)
    total = sum(len(sequence) for sequence in corpus)
    if total == 0:
        raise InvalidArgumentError("corpus has no tokens")
    return {keyword: 1000.0 * counts[keyword] / total for keyword in keywords}


def duplicate_token_rate(prompts: Sequence[TokenSeq]) -> float:
    """Fraction of prompt tokens that repeat an earlier token of the same prompt."""
    total = sum(len(prompt) for prompt in prompts)
    if total == 0:
        return 0.0
    repeats = sum(len(prompt) - len(set(prompt)) for prompt in prompts)
    return repeats / total


def shuffle_ablation(samples: Sequence[TokenSeq], rng: np.random.Generator) -> list[TokenSeq]:
    """Permute the tokens of every sequence independently, keeping each multiset."""
    _require_non_empty(samples, "synthesized set")
    return [tuple(int(token) for token in rng.permutation(np.asarray(sample, dtype=np.int64))) for sample in samples]


def sign_test(wins: int, losses: int) -> float:
    """
    Exact two-sided binomial sign test p-value (ties are dropped by the caller).

    Parameters
    ----------
    wins : int
        Seeds where the first method is strictly better.
    losses : int
        Seeds where it is strictly worse.

    Returns
    -------
    float
        ``P(|K - n/2| >= |wins - n/2|)`` for ``K ~ Binomial(n, 1/2)``.
    """
    if wins < 0 or losses < 0:
        raise InvalidArgumentError("counts must be non-negative")
    n = wins + losses
    if n == 0:
        return 1.0
    extreme = min(wins, losses)
    tail = math.fsum(math.comb(n, k) for k in range(extreme + 1)) / 2.0**n
    return min(1.0, 2.0 * tail)


@dataclass(frozen=True)
class MetricsReport:
    """
    Test-set metrics of one distilled student.

    Attributes
    ----------
    accuracy : float
        Student accuracy on the labeled test split.
    agreement : float
        Teacher/student argmax agreement on the test inputs.
    per_class_accuracy : dict[int, float]
        Accuracy per label.
    duplicate_rate : float | None
        Duplicate-token rate of the prompts that built the transfer set.
    keyword_rates : dict[int, float]
        Keyword frequency per 1000 tokens of the transfer set.
    """

    accuracy: float
    agreement: float
    per_class_accuracy: dict[int, float] = field(default_factory=dict)
    duplicate_rate: float | None = None
    keyword_rates: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        fractions = [self.accuracy, self.agreement, *self.per_class_accuracy.values()]
        if self.duplicate_rate is not None:
            fractions.append(self.duplicate_rate)
        if any(not 0.0 <= value <= 1.0 for value in fractions):
            raise InvalidArgumentError("metric fractions must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["per_class_accuracy"] = {str(k): v for k, v in self.per_class_accuracy.items()}
        data["keyword_rates"] = {str(k): v for k, v in self.keyword_rates.items()}
        return data


def evaluate_student(
    teacher: ClassifierModel,
    student: ClassifierModel,
    test: Sequence[LabeledExample],
    prompts: Sequence[TokenSeq] = (),
    transfer_set: Sequence[TokenSeq] = (),
    keywords: Iterable[int] = (),
) -> MetricsReport:
    """Assemble the metrics report of a student on the test split."""
    return MetricsReport(
        accuracy=accuracy(student, test),
        agreement=agreement(teacher, student, [example.x for example in test]),
        per_class_accuracy=per_class_accuracy(student, test),
        duplicate_rate=duplicate_token_rate(prompts) if prompts else None,
        keyword_rates=keyword_frequency(transfer_set, keywords) if transfer_set else {},
    )

"""
Synthetic ground-truth data distribution.

Each class is a first-order Markov chain over a shared token inventory whose
columns for that class's keywords are boosted. A separate background chain,
with keywords damped, stands in for a broad unlabeled corpus. The original
training distribution of the teacher is this process; it is discarded before
data-free distillation starts.
"""

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Any, TypeVar

import numpy as np
import numpy.typing as npt

from core.exceptions import InvalidArgumentError
from core.numerics import FloatArray, sample_categorical
from core.rng import RngStream, Stream
from corpus.vocab import DEFAULT_MAX_LEN, TokenSeq, Vocab, build_vocab

T = TypeVar("T")

DEFAULT_CLASS_NAMES = ("world", "sports", "business", "science")

DEFAULT_KEYWORDS = (
    ("world", "nation", "president", "election", "minister", "war", "treaty", "embassy", "troops", "parliament", "border", "refugees"),
    ("sports", "game", "team", "coach", "league", "season", "player", "match", "score", "tournament", "championship", "goal"),
    ("business", "market", "stocks", "company", "profit", "shares", "investors", "bank", "economy", "trade", "merger", "earnings"),
    ("science", "research", "study", "scientists", "space", "nasa", "laboratory", "discovery", "planet", "physics", "genome", "experiment"),
)

# Initial prompt words and template words live here so default prompts always encode.
DEFAULT_BACKGROUND = (
    "The", "It", "To", "There", "What", "This", "All", "If", "We",
    "A", "latest", "news", "document", "about", "movie", "review", "sentence:", "think",
    "the", "a", "of", "and", "in", "on", "to", "for", "with", "at", "from", "by", "is", "was",
    "said", "has", "after", "over", "as", "that", "it", "its", "will", "more", "year", "week",
    "people", "report", "last", "first", "two", "three", "time", "day", "officials", "today",
    "could", "may", "also", "new", "says", "would", "been",
)


@dataclass(frozen=True)
class WorldSpec:
    """
    Parameters of the synthetic world.

    Attributes
    ----------
    class_names : tuple[str, ...]
        One name per class; also the ``[Category]`` filler of manual prompts.
    keywords : tuple[tuple[str, ...], ...]
        Pairwise disjoint topic tokens per class.
    background_tokens : tuple[str, ...]
        Shared token pool (no keyword may appear here).
    boost : float
        Multiplier on a class's keyword columns in its chain (>= 1).
    length_range : tuple[int, int]
        Inclusive sentence length range.
    background_mix : float
        Probability that an unlabeled sentence comes from the background chain.
    concentration : float
        Gamma shape of the random base transition weights; small values give peaky rows.
    rare_tokens : int
        Extra filler tokens (``rare0000`` ...) appended to the inventory.
    rare_share : float
        Probability mass every chain row gives the filler tokens together.
    seed : int
        Seed of the realization.
    """

    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    keywords: tuple[tuple[str, ...], ...] = DEFAULT_KEYWORDS
    background_tokens: tuple[str, ...] = DEFAULT_BACKGROUND
    boost: float = 6.0
    length_range: tuple[int, int] = (8, 32)
    background_mix: float = 0.5
    concentration: float = 0.3
    rare_tokens: int = 0
    rare_share: float = 0.1
    seed: int = 0

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def validate(self) -> None:
        """
        Check the world invariants.

        Raises
        ------
        InvalidArgumentError
            On fewer than two classes, overlapping keyword sets, a bad length
            range, a boost below one, a mixture weight outside [0, 1] or a
            filler share outside (0, 1).
        """
        if self.num_classes < 2:
            raise InvalidArgumentError("a world needs at least two classes")
        if len(self.keywords) != self.num_classes:
            raise InvalidArgumentError("one keyword set per class is required")
        if any(not words for words in self.keywords):
            raise InvalidArgumentError("every class needs at least one keyword")
        seen: set[str] = set()
        for words in self.keywords:
            if seen.intersection(words) or len(set(words)) != len(words):
                raise InvalidArgumentError("keyword sets must be pairwise disjoint")
            seen.update(words)
        if seen.intersection(self.background_tokens):
            raise InvalidArgumentError("background tokens must not be keywords")
        if len(set(self.background_tokens)) != len(self.background_tokens):
            raise InvalidArgumentError("background tokens must be unique")
        low, high = self.length_range
        if low < 3 or high > DEFAULT_MAX_LEN or low > high:
            raise InvalidArgumentError(f"length range must satisfy 3 <= min <= max <= {DEFAULT_MAX_LEN}")
        if self.boost < 1.0:
            raise InvalidArgumentError("keyword boost must be >= 1")
        if not 0.0 <= self.background_mix <= 1.0:
            raise InvalidArgumentError("background mix must lie in [0, 1]")
        if self.concentration <= 0.0:
            raise InvalidArgumentError("concentration must be positive")
        if self.rare_tokens < 0 or not 0.0 < self.rare_share < 1.0:
            raise InvalidArgumentError("rare tokens must be >= 0 and their share must lie in (0, 1)")
        if seen.union(self.background_tokens).intersection(rare_words(self.rare_tokens)):
            raise InvalidArgumentError("filler token names clash with keywords or background tokens")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WorldSpec":
        return cls(
            class_names=tuple(data["class_names"]),
            keywords=tuple(tuple(words) for words in data["keywords"]),
            background_tokens=tuple(data["background_tokens"]),
            boost=float(data["boost"]),
            length_range=(int(data["length_range"][0]), int(data["length_range"][1])),
            background_mix=float(data["background_mix"]),
            concentration=float(data["concentration"]),
            rare_tokens=int(data["rare_tokens"]),
            rare_share=float(data["rare_share"]),
            seed=int(data["seed"]),
        )


@dataclass(frozen=True)
class LabeledExample:
    """A token sequence and its class index."""

    x: TokenSeq
    y: int


@dataclass(frozen=True, eq=False)
class World:
    """
    Realized world: row-stochastic chains over the world's token inventory.

    Row ``K`` (the last row) of every table is the start distribution.

    Attributes
    ----------
    spec : WorldSpec
        Parameters the world was realized from.
    vocab : Vocab
        Shared vocabulary covering every world token.
    token_ids : npt.NDArray[np.int64]
        Vocabulary id of each inventory position.
    class_transitions : FloatArray
        ``(C, K + 1, K)`` per-class transition tables.
    background_transitions : FloatArray
        ``(K + 1, K)`` background transition table.
    """

    spec: WorldSpec
    vocab: Vocab
    token_ids: npt.NDArray[np.int64]
    class_transitions: FloatArray
    background_transitions: FloatArray
    keyword_ids: tuple[frozenset[int], ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        keyword_ids = tuple(frozenset(self.vocab.require(word) for word in words) for words in self.spec.keywords)
        object.__setattr__(self, "keyword_ids", keyword_ids)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def inventory_size(self) -> int:
        return int(self.token_ids.size)

    @property
    def all_keyword_ids(self) -> frozenset[int]:
        return frozenset().union(*self.keyword_ids)


def rare_words(n: int) -> list[str]:
    return [f"rare{i:04d}" for i in range(n)]


def _inventory(spec: WorldSpec) -> list[str]:
    return [word for words in spec.keywords for word in words] + list(spec.background_tokens) + rare_words(spec.rare_tokens)


def _normalize_rows(table: FloatArray) -> FloatArray:
    return table / table.sum(axis=-1, keepdims=True)


def _set_column_share(table: FloatArray, start: int, share: float) -> FloatArray:
    """Rescale every row so columns ``start:`` hold ``share`` of its mass."""
    head = table[:, :start].sum(axis=-1, keepdims=True)
    tail = table[:, start:].sum(axis=-1, keepdims=True)
    scaled = table.copy()
    scaled[:, :start] *= (1.0 - share) / head
    scaled[:, start:] *= share / tail
    return scaled


def make_world(spec: WorldSpec) -> World:
    """
    Realize a world deterministically from its spec.

    Parameters
    ----------
    spec : WorldSpec
        Validated world parameters.

    Returns
    -------
    World
        Per-class chains with boosted keyword mass and a keyword-damped
        background chain.

    Raises
    ------
    InvalidArgumentError
        If the WorldSpec violates its invariants (e.g. overlapping keyword sets).
    """
    spec.validate()
    inventory = _inventory(spec)
    vocab = build_vocab([" ".join(inventory)])
    token_ids = np.array([vocab.require(word) for word in inventory], dtype=np.int64)
    size = len(inventory)

    rng = RngStream(spec.seed, (Stream.WORLD,)).generator()
    base = rng.gamma(spec.concentration, size=(size + 1, size)) + 1e-6
    background = rng.gamma(spec.concentration, size=(size + 1, size)) + 1e-6
    if spec.rare_tokens:
        common = size - spec.rare_tokens
        base = _set_column_share(base, common, spec.rare_share)
        background = _set_column_share(background, common, spec.rare_share)

    offsets = np.cumsum([0] + [len(words) for words in spec.keywords])
    class_tables = np.empty((spec.num_classes, size + 1, size), dtype=np.float64)
    for c in range(spec.num_classes):
        table = base.copy()
        table[:, offsets[c] : offsets[c + 1]] *= spec.boost
        class_tables[c] = _normalize_rows(table)
    background[:, : offsets[-1]] /= spec.boost

    return World(
        spec=spec,
        vocab=vocab,
        token_ids=token_ids,
        class_transitions=class_tables,
        background_transitions=_normalize_rows(background),
    )


def _sample_chain(world: World, table: FloatArray, length: int, rng: np.random.Generator) -> TokenSeq:
    state = world.inventory_size
    tokens = []
    for _ in range(length):
        state = sample_categorical(table[state], rng)
        tokens.append(int(world.token_ids[state]))
    return tuple(tokens)


def _sample_length(world: World, rng: np.random.Generator) -> int:
    low, high = world.spec.length_range
    return int(rng.integers(low, high + 1))


def sample_labeled(world: World, n: int, rng: np.random.Generator) -> list[LabeledExample]:
    """
    Draw ``n`` labeled sentences: uniform class, uniform length, class chain tokens.

    Raises
    ------
    InvalidArgumentError
        If ``n`` < 1.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    examples = []
    for _ in range(n):
        label = int(rng.integers(world.num_classes))
        length = _sample_length(world, rng)
        examples.append(LabeledExample(_sample_chain(world, world.class_transitions[label], length, rng), label))
    return examples


def sample_unlabeled(
    world: World,
    n: int,
    include_background: bool,
    rng: np.random.Generator,
    mix: float | None = None,
) -> list[TokenSeq]:
    """
    Draw ``n`` unlabeled sentences.

    Parameters
    ----------
    world : World
        Realized world.
    n : int
        Number of sentences (>= 1).
    include_background : bool
        Whether sentences may come from the background chain.
    rng : np.random.Generator
        Random source.
    mix : float | None
        Probability of a background sentence; defaults to ``WorldSpec.background_mix``.

    Returns
    -------
    list[TokenSeq]
        Sentences with labels withheld.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    weight = world.spec.background_mix if mix is None else mix
    if not 0.0 <= weight <= 1.0:
        raise InvalidArgumentError(f"mix must lie in [0, 1], got {weight}")
    sentences = []
    for _ in range(n):
        if include_background and rng.random() < weight:
            table = world.background_transitions
        else:
            table = world.class_transitions[int(rng.integers(world.num_classes))]
        sentences.append(_sample_chain(world, table, _sample_length(world, rng), rng))
    return sentences


def split(
    dataset: Sequence[T],
    fractions: Sequence[float],
    rng: np.random.Generator | None = None,
) -> tuple[list[T], ...]:
    """
    Partition ``dataset`` into disjoint parts with the given fractions.

    Part sizes are rounded; the last part takes the remainder. Items are
    shuffled first when ``rng`` is given, otherwise order is preserved.

    Raises
    ------
    InvalidArgumentError
        If a fraction is negative or they do not sum to one.
    """
    if not fractions or any(f < 0.0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"fractions must be non-negative and sum to 1, got {list(fractions)}")
    order = rng.permutation(len(dataset)) if rng is not None else np.arange(len(dataset))
    sizes = [int(round(f * len(dataset))) for f in fractions[:-1]]
    if sum(sizes) > len(dataset):
        raise InvalidArgumentError("fractions overflow the dataset")
    sizes.append(len(dataset) - sum(sizes))
    parts: list[list[T]] = []
    start = 0
    for size in sizes:
        parts.append([dataset[int(i)] for i in order[start : start + size]])
        start += size
    return tuple(parts)

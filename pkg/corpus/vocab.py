"""
Shared vocabulary and whitespace tokenization.

One vocabulary serves the teacher, the student, the content generator and
the topic prompter. Ids 0..3 are reserved for ``<pad>``, ``<bos>``,
``<eos>`` and ``<unk>``.
"""

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from core.exceptions import InvalidArgumentError

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")
DEFAULT_MAX_LEN = 128

TokenSeq = tuple[int, ...]


@dataclass(frozen=True)
class Vocab:
    """
    Immutable token inventory.

    Attributes
    ----------
    tokens : tuple[str, ...]
        Token strings by id; the first four are the reserved tokens.
    """

    tokens: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.tokens[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise InvalidArgumentError("vocabulary must start with the reserved tokens")
        index = {token: i for i, token in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise InvalidArgumentError("vocabulary tokens must be unique")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index

    @property
    def content_ids(self) -> range:
        """Ids of the non-reserved tokens."""
        return range(len(RESERVED_TOKENS), len(self.tokens))

    def id_of(self, token: str) -> int:
        """Return the id of ``token`` or ``UNK_ID``."""
        return self._index.get(token, UNK_ID)

    def require(self, token: str) -> int:
        """Return the id of ``token``, raising if it is not in the vocabulary."""
        if token not in self._index:
            raise InvalidArgumentError(f"token {token!r} is not in the vocabulary")
        return self._index[token]


def build_vocab(corpus: Sequence[str]) -> Vocab:
    """
    Build a vocabulary from raw whitespace-tokenized strings.

    Content tokens are ordered by descending frequency, then lexicographically,
    so the same corpus always yields the same ids.

    Parameters
    ----------
    corpus : Sequence[str]
        Raw sentences.

    Returns
    -------
    Vocab
        Reserved tokens followed by the corpus tokens.

    Raises
    ------
    InvalidArgumentError
        If ``corpus`` is empty.
    """
    if not corpus:
        raise InvalidArgumentError("cannot build a vocabulary from an empty corpus")
    counts = Counter(token for text in corpus for token in text.split() if token not in RESERVED_TOKENS)
    ordered = sorted(counts, key=lambda token: (-counts[token], token))
    return Vocab(RESERVED_TOKENS + tuple(ordered))


def encode(vocab: Vocab, text: str, max_len: int = DEFAULT_MAX_LEN) -> TokenSeq:
    """Map whitespace tokens to ids (unknown -> ``<unk>``), truncated to ``max_len``."""
    if max_len < 1:
        raise InvalidArgumentError(f"max_len must be positive, got {max_len}")
    return tuple(vocab.id_of(token) for token in text.split()[:max_len])


def decode(vocab: Vocab, seq: Iterable[int]) -> str:
    """
    Map ids back to a space-joined string.

    Raises
    ------
    InvalidArgumentError
        If an id is outside the vocabulary.
    """
    words = []
    for token_id in seq:
        if not 0 <= token_id < len(vocab):
            raise InvalidArgumentError(f"token id {token_id} outside vocabulary of size {len(vocab)}")
        words.append(vocab.tokens[token_id])
    return " ".join(words)


def check_token_seq(vocab_size: int, seq: Sequence[int], max_len: int = DEFAULT_MAX_LEN) -> None:
    """
    Validate that ``seq`` is a non-empty sequence of ids below ``vocab_size`` no longer than ``max_len``.

    Raises
    ------
    InvalidArgumentError
        On an empty or too long sequence or an out-of-range id.
    """
    if not 1 <= len(seq) <= max_len:
        raise InvalidArgumentError(f"sequence length {len(seq)} outside [1, {max_len}]")
    if any(not 0 <= token_id < vocab_size for token_id in seq):
        raise InvalidArgumentError(f"sequence contains an id outside vocabulary of size {vocab_size}")

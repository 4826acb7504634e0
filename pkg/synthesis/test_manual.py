"""Unit tests for hand-crafted prompts."""

from collections import Counter
from itertools import islice

import pytest

from core.exceptions import InvalidArgumentError
from core.rng import RngStream
from corpus.vocab import build_vocab, decode
from synthesis.manual import TEMPLATE_SETS, ManualPromptSource, manual_prompt_source


@pytest.fixture
def vocab():
    """Provide a vocabulary holding the news template and four class names."""
    return build_vocab(["A latest news about world sports business science movie review"])


class TestManualPromptSource:
    """Test cases for ManualPromptSource and manual_prompt_source."""

    def test_single_pair_is_constant(self, vocab):
        """Test that one template and one class always give the same prompt."""
        stream = manual_prompt_source(TEMPLATE_SETS["ag_news"], ["sports"], vocab, RngStream(1).generator())

        prompts = list(islice(stream, 50))

        assert {prompt.tokens for prompt in prompts} == {prompts[0].tokens}
        assert decode(vocab, prompts[0].tokens) == "A latest sports news"

    def test_pairs_are_uniform(self, vocab):
        """
        Test the frequency of every (template, class) pair.

        Arrange: Two templates and four classes
        Act: Draw 10^4 prompts
        Assert: Each of the eight prompts has frequency 0.125 +/- 0.02
        """
        # Arrange
        templates = ("A latest [Category] news", "news about [Category]")
        classes = ("world", "sports", "business", "science")

        # Act
        counts = Counter(
            prompt.tokens for prompt in islice(manual_prompt_source(templates, classes, vocab, RngStream(2).generator()), 10_000)
        )

        # Assert
        assert len(counts) == 8
        for count in counts.values():
            assert count / 10_000 == pytest.approx(0.125, abs=0.02)

    def test_unknown_word_fails_at_construction(self, vocab):
        """Test that a template word outside the vocabulary is rejected."""
        with pytest.raises(InvalidArgumentError):
            ManualPromptSource(TEMPLATE_SETS["dbpedia"], ["sports"], vocab)

    @pytest.mark.parametrize("templates, classes", [((), ("sports",)), (("A [Category] movie review",), ()), (("A movie",), ("sports",))])
    def test_rejects_empty_or_placeholder_free_input(self, vocab, templates, classes):
        """Test that missing templates, classes or placeholders are rejected."""
        with pytest.raises(InvalidArgumentError):
            ManualPromptSource(templates, classes, vocab)

"""Hand-crafted prompts: fixed templates with the class name filled in."""

from collections.abc import Iterator, Sequence

import numpy as np

from core.exceptions import InvalidArgumentError
from corpus.vocab import Vocab
from synthesis.prompter import Prompt

PLACEHOLDER = "[Category]"

TEMPLATE_SETS: dict[str, tuple[str, ...]] = {
    "ag_news": ("A latest [Category] news",),
    "dbpedia": ("A document about [Category]",),
    "imdb": ("A [Category] movie review",),
    "sst2": ("[Category] sentence:",),
}


class ManualPromptSource:
    """
    Uniform sampler over (template, class) pairs.

    Every filled-in prompt is encoded at construction, so a template word
    missing from the vocabulary fails early.
    """

    def __init__(self, templates: Sequence[str], class_names: Sequence[str], vocab: Vocab) -> None:
        if not templates or not class_names:
            raise InvalidArgumentError("manual prompts need at least one template and one class")
        self.prompts: list[Prompt] = []
        for template in templates:
            if PLACEHOLDER not in template:
                raise InvalidArgumentError(f"template {template!r} has no {PLACEHOLDER} placeholder")
            for name in class_names:
                words = template.replace(PLACEHOLDER, name).split()
                self.prompts.append(Prompt(tuple(vocab.require(word) for word in words)))

    def sample(self, rng: np.random.Generator) -> Prompt:
        return self.prompts[int(rng.integers(len(self.prompts)))]


def manual_prompt_source(
    templates: Sequence[str],
    class_names: Sequence[str],
    vocab: Vocab,
    rng: np.random.Generator,
) -> Iterator[Prompt]:
    """
    Endless stream of manual prompts.

    Raises
    ------
    InvalidArgumentError
        If a filled-in template contains a word outside ``vocab``.
    """
    source = ManualPromptSource(templates, class_names, vocab)
    while True:
        yield source.sample(rng)

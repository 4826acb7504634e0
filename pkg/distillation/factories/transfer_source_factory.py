"""
Abstract Factory pattern implementation for transfer sources.

Every distillation method differs in where its transfer set comes from:
the original training inputs, uniform random text, a background corpus, or
text synthesized from manual or reinforced prompts. A factory per method
builds the matching TransferSource, which then runs the distillation.
"""

from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

from core.exceptions import InvalidArgumentError, PrerequisiteError
from core.rng import RngStream
from corpus.services import Datasets
from corpus.vocab import TokenSeq, Vocab
from distillation.kd import KDConfig
from distillation.reports import RunReport
from distillation.services import KDService, random_text_corpus
from learners.classifier import ClassifierModel
from learners.language_models import LanguageModel, NeuralLM
from synthesis.decoding import DecodeConfig
from synthesis.manual import TEMPLATE_SETS, ManualPromptSource
from synthesis.prompter import RLConfig
from synthesis.services import PromptDFDService

METHODS = ("vanilla", "random_text", "unlabel", "manual", "rl")

_SHUFFLE_KEY = 0
_CORPUS_KEY = 1


@dataclass(frozen=True)
class DistillationInputs:
    """
    Everything a transfer source may draw on.

    Attributes
    ----------
    teacher : ClassifierModel
        Frozen teacher.
    student : ClassifierModel
        Initial student.
    kd : KDConfig
        Student settings.
    vocab : Vocab
        Shared vocabulary.
    datasets : Datasets
        World datasets; data-free methods only use the dev split for monitoring.
    stream : RngStream
        Parent stream of the run.
    rl : RLConfig
        Prompter settings (prompt-driven methods).
    decode : DecodeConfig
        Completion settings (prompt-driven methods).
    generator : LanguageModel | None
        Frozen content generator (prompt-driven methods).
    prompter : NeuralLM | None
        Initial prompter (reinforced method).
    pretrained_prompter : bool
        Every seed starts from ``prompter`` itself instead of a fresh
        initialization of its shape.
    class_names : tuple[str, ...]
        ``[Category]`` fillers of manual prompts.
    template_set : str
        Key of ``TEMPLATE_SETS`` used by the manual method.
    random_text_size : int
        Number of random sequences; 0 means the size of the training split.
    length_range : tuple[int, int]
        Lengths of random sequences.
    on_epoch : Callable[[RunReport], None] | None
        Called with the report after every epoch.
    """

    teacher: ClassifierModel
    student: ClassifierModel
    kd: KDConfig
    vocab: Vocab
    datasets: Datasets
    stream: RngStream
    rl: RLConfig = field(default_factory=RLConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    generator: LanguageModel | None = None
    prompter: NeuralLM | None = None
    pretrained_prompter: bool = False
    class_names: tuple[str, ...] = ()
    template_set: str = "ag_news"
    random_text_size: int = 0
    length_range: tuple[int, int] = (8, 32)
    on_epoch: Callable[[RunReport], None] | None = None


@dataclass
class DistillationResult:
    """Trained student, its report and, for the reinforced method, the trained prompter."""

    student: ClassifierModel
    report: RunReport
    prompter: NeuralLM | None = None


class TransferSource(ABC):
    """A way of obtaining a transfer set and distilling on it."""

    method: str

    @abstractmethod
    def distill(self, inputs: DistillationInputs) -> DistillationResult:
        """
        Distill ``inputs.student`` from ``inputs.teacher``.

        Parameters
        ----------
        inputs : DistillationInputs
            Models, configs and data of the run.

        Returns
        -------
        DistillationResult
            Trained student and run report.
        """


class CorpusTransferSource(TransferSource):
    """Fixed transfer set distilled with KDService."""

    def __init__(self, method: str, corpus_of: Callable[[DistillationInputs], Sequence[TokenSeq]]) -> None:
        self.method = method
        self.corpus_of = corpus_of

    def distill(self, inputs: DistillationInputs) -> DistillationResult:
        student, report = KDService().distill_with_corpus(
            inputs.student,
            inputs.teacher,
            self.corpus_of(inputs),
            inputs.kd,
            inputs.stream.child(_SHUFFLE_KEY).generator(),
            method=self.method,
            dev=inputs.datasets.dev,
            on_epoch=inputs.on_epoch,
        )
        return DistillationResult(student, report)


class PromptTransferSource(TransferSource):
    """Transfer set synthesized per epoch from prompts."""

    def __init__(self, method: str, workers: int | None = None) -> None:
        self.method = method
        self.workers = workers

    def distill(self, inputs: DistillationInputs) -> DistillationResult:
        if inputs.generator is None:
            raise PrerequisiteError("content generator", "pretrain_generator")
        service = PromptDFDService(self.workers)
        if self.method == "manual":
            if inputs.template_set not in TEMPLATE_SETS:
                raise InvalidArgumentError(f"Unknown template set: {inputs.template_set}")
            source = ManualPromptSource(TEMPLATE_SETS[inputs.template_set], inputs.class_names, inputs.vocab)
            prompter = None
        else:
            if inputs.prompter is None:
                raise InvalidArgumentError("the reinforced method needs an initial prompter")
            source = None
            prompter = inputs.prompter
        student, trained_prompter, report = service.run_promptdfd(
            inputs.teacher,
            inputs.generator,
            inputs.student,
            inputs.kd,
            inputs.rl,
            inputs.decode,
            inputs.rl.initial_ids(inputs.vocab),
            inputs.stream,
            prompter=prompter,
            manual=source,
            dev=inputs.datasets.dev,
            on_epoch=inputs.on_epoch,
        )
        return DistillationResult(student, report, trained_prompter)


def _random_text(inputs: DistillationInputs) -> list[TokenSeq]:
    size = inputs.random_text_size or len(inputs.datasets.train)
    return random_text_corpus(inputs.vocab, size, inputs.length_range, inputs.stream.child(_CORPUS_KEY).generator())


class TransferSourceFactory(ABC):
    """
    Abstract factory for creating transfer sources.

    This abstract base class defines the interface for creating
    transfer sources following the Abstract Factory pattern.
    """

    @abstractmethod
    def create_source(self, **kwargs: Any) -> TransferSource:
        """
        Create a transfer source.

        Parameters
        ----------
        kwargs : Any
            Keyword arguments for source creation.

        Returns
        -------
        TransferSource
            Created transfer source.
        """


class VanillaFactory(TransferSourceFactory):
    """Original training inputs with labels dropped (needs the data)."""

    def create_source(self, **kwargs: Any) -> TransferSource:
        return CorpusTransferSource("vanilla", lambda inputs: [example.x for example in inputs.datasets.train])


class RandomTextFactory(TransferSourceFactory):
    """Uniform random tokens from the vocabulary."""

    def create_source(self, **kwargs: Any) -> TransferSource:
        return CorpusTransferSource("random_text", _random_text)


class UnlabelFactory(TransferSourceFactory):
    """Background corpus unrelated to the task."""

    def create_source(self, **kwargs: Any) -> TransferSource:
        return CorpusTransferSource("unlabel", lambda inputs: inputs.datasets.background)


class ManualFactory(TransferSourceFactory):
    """
    Hand-crafted prompts completed by the generator.

    Parameters
    ----------
    kwargs : Any
        ``workers``: rollout threads, defaults to ``settings.DFD_THREADS``.
    """

    def create_source(self, **kwargs: Any) -> TransferSource:
        return PromptTransferSource("manual", kwargs.get("workers"))


class RLFactory(TransferSourceFactory):
    """Reinforced prompter prompts completed by the generator."""

    def create_source(self, **kwargs: Any) -> TransferSource:
        return PromptTransferSource("rl", kwargs.get("workers"))


class TransferSourceFactoryProvider:
    """
    Provider for obtaining the appropriate transfer source factory.

    This class acts as a factory of factories, returning the correct
    TransferSourceFactory implementation based on the distillation method.
    """

    @staticmethod
    def get_factory(method: str) -> TransferSourceFactory:
        """
        Get the appropriate factory for the given method.

        Parameters
        ----------
        method : str
            One of ``vanilla``, ``random_text``, ``unlabel``, ``manual`` or ``rl``.

        Returns
        -------
        TransferSourceFactory
            Factory instance for the method.

        Raises
        ------
        InvalidArgumentError
            If the method is unknown.
        """
        factories: dict[str, type[TransferSourceFactory]] = {
            "vanilla": VanillaFactory,
            "random_text": RandomTextFactory,
            "unlabel": UnlabelFactory,
            "manual": ManualFactory,
            "rl": RLFactory,
        }

        factory_class = factories.get(method)
        if factory_class is None:
            raise InvalidArgumentError(f"Unknown distillation method: {method}")

        return factory_class()

"""
Experiment configuration.

A TOML file with sections ``[world]``, ``[models]``, ``[kd]``, ``[rl]``,
``[decode]`` and ``[eval]`` plus the top-level keys ``method``, ``seeds``
and ``output_dir``. Missing keys take the defaults below; unknown keys are
rejected. Every error names the dotted key it concerns.
"""

import hashlib
import json
import tomllib
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from django import forms

from core.exceptions import ConfigValidationError, DFDError
from corpus.world import WorldSpec
from distillation.kd import KDConfig
from experiments.forms import DecodeForm, EvalForm, ExperimentForm, KDForm, ModelsForm, RLForm, WorldForm
from synthesis.decoding import DecodeConfig
from synthesis.prompter import RLConfig


@dataclass(frozen=True)
class ModelsConfig:
    """
    Model sizes and the pre-distillation training of teacher and generator.

    Attributes
    ----------
    teacher_dim, student_dim : int
        Embedding widths; the student is sliced from the teacher.
    hash_buckets : int
        Bigram feature buckets of both classifiers.
    init_scale : float
        Standard deviation of random initialization.
    teacher_epochs, teacher_lr, teacher_batch_size, teacher_optimizer
        Supervised teacher training.
    generator_order, generator_smoothing
        Count generator n-gram order and add-k constant.
    prompter_dim, prompter_window
        Prompter embedding width and context window.
    prompter_pretrain_epochs, prompter_pretrain_lr, prompter_pretrain_batch_size
        Maximum-likelihood warm start of the prompter on the generator
        corpus; 0 epochs leaves every seed a fresh random prompter.
    """

    teacher_dim: int = 32
    student_dim: int = 16
    hash_buckets: int = 4096
    init_scale: float = 0.1
    teacher_epochs: int = 8
    teacher_lr: float = 0.01
    teacher_batch_size: int = 32
    teacher_optimizer: str = "adam"
    generator_order: int = 3
    generator_smoothing: float = 0.1
    prompter_dim: int = 16
    prompter_window: int = 4
    prompter_pretrain_epochs: int = 0
    prompter_pretrain_lr: float = 0.01
    prompter_pretrain_batch_size: int = 32


@dataclass(frozen=True)
class EvalConfig:
    """
    Data sizes and analysis settings.

    Attributes
    ----------
    labeled_size : int
        Labeled sentences drawn before the train/dev/test split.
    unlabeled_size : int
        Size of the generator corpus.
    background_size : int
        Size of the background (Unlabel) corpus; 0 uses ``unlabeled_size``.
    sweep_lengths : tuple[int, ...]
        Prompt lengths of the length sweep.
    transfer_size : int
        Synthesized sequences for the shuffle and keyword analyses.
    template_set : str
        Manual prompt template set.
    random_text_size : int
        Random-text corpus size; 0 uses the training split size.
    """

    labeled_size: int = 2000
    unlabeled_size: int = 2000
    background_size: int = 0
    sweep_lengths: tuple[int, ...] = (3, 4, 5, 6, 8, 10)
    transfer_size: int = 512
    template_set: str = "ag_news"
    random_text_size: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment configuration."""

    world: WorldSpec = field(default_factory=WorldSpec)
    models: ModelsConfig = field(default_factory=ModelsConfig)
    kd: KDConfig = field(default_factory=KDConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    method: str = "rl"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = ""

    def to_dict(self) -> dict[str, Any]:
        """Plain JSON-compatible form; ``parse_config`` inverts it."""
        return json.loads(json.dumps(asdict(self)))

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_overrides(self, seed: int | None = None, method: str | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        """Apply command-line overrides (``--seed`` replaces the seed list)."""
        data = self.to_dict()
        if seed is not None:
            data["seeds"] = [seed]
        if method is not None:
            data["method"] = method
        if output_dir is not None:
            data["output_dir"] = output_dir
        return parse_config(data)


SECTIONS: dict[str, tuple[type, type[forms.Form]]] = {
    "world": (WorldSpec, WorldForm),
    "models": (ModelsConfig, ModelsForm),
    "kd": (KDConfig, KDForm),
    "rl": (RLConfig, RLForm),
    "decode": (DecodeConfig, DecodeForm),
    "eval": (EvalConfig, EvalForm),
}


def _defaults(cls: type) -> dict[str, Any]:
    return asdict(cls())


def _validate(prefix: str, form_class: type[forms.Form], defaults: dict[str, Any], values: Any) -> dict[str, Any]:
    if not isinstance(values, Mapping):
        raise ConfigValidationError(prefix or "config", "expected a table")
    form = form_class(data={**defaults, **values})
    unknown = sorted(set(values) - set(form.fields))
    if unknown:
        raise ConfigValidationError(f"{prefix}{unknown[0]}", "unknown key")
    if not form.is_valid():
        key, messages = next(iter(form.errors.items()))
        raise ConfigValidationError(f"{prefix}{key}" if key != "__all__" else prefix.rstrip(".") or "config", str(messages[0]))
    return {name: form.cleaned_data[name] for name in defaults}


def parse_config(data: Mapping[str, Any]) -> ExperimentConfig:
    """
    Validate a parsed configuration mapping.

    Parameters
    ----------
    data : Mapping[str, Any]
        TOML document (or the output of ``ExperimentConfig.to_dict``).

    Returns
    -------
    ExperimentConfig
        Frozen, validated configuration.

    Raises
    ------
    ConfigValidationError
        On an unknown key or a violated constraint; ``key`` is the dotted path.
    """
    top_defaults = {f.name: getattr(ExperimentConfig(), f.name) for f in fields(ExperimentConfig) if f.name not in SECTIONS}
    top_values = {key: value for key, value in data.items() if key not in SECTIONS}
    top = _validate("", ExperimentForm, top_defaults, top_values)

    sections: dict[str, Any] = {}
    for name, (cls, form_class) in SECTIONS.items():
        cleaned = _validate(f"{name}.", form_class, _defaults(cls), data.get(name, {}))
        try:
            sections[name] = cls(**cleaned)
            if isinstance(sections[name], WorldSpec):
                sections[name].validate()
        except DFDError as exc:
            raise ConfigValidationError(name, str(exc)) from exc
    return ExperimentConfig(**sections, **top)


def load_config(path: Path) -> ExperimentConfig:
    """
    Read and validate a TOML experiment configuration.

    Raises
    ------
    ConfigValidationError
        If the file is missing, is not valid TOML, or fails validation.
    """
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise ConfigValidationError(str(path), f"cannot read file: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigValidationError(str(path), f"malformed TOML: {exc}") from exc
    return parse_config(data)


def seed_config(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Config of one seed, as recorded alongside that seed's report."""
    return replace(config, seeds=(seed,))

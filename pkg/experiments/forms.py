"""
Forms for experiment configuration.

Each TOML section is validated by one form. Values arrive already typed
from the TOML parser, so list-valued keys use ``TupleField``.
"""

from typing import Any

from django import forms
from django.core.exceptions import ValidationError
from django.core.validators import MaxValueValidator, MinValueValidator

from corpus.vocab import DEFAULT_MAX_LEN
from distillation.factories import METHODS
from synthesis.manual import TEMPLATE_SETS
from synthesis.prompter import RewardMode

OPTIMIZER_CHOICES = [("sgd", "SGD"), ("adam", "Adam")]

MIN_SWEEP_LENGTH = 3
MAX_SWEEP_LENGTH = 10


def positive(value: float) -> None:
    if value <= 0:
        raise ValidationError("Ensure this value is greater than 0.")


def below_one(value: float) -> None:
    if value >= 1:
        raise ValidationError("Ensure this value is less than 1.")


class TupleField(forms.Field):
    """
    List of typed items, cleaned to a tuple.

    Parameters
    ----------
    item_type : type
        ``str``, ``int`` or ``float``; booleans are never accepted as numbers.
    min_items : int
        Minimum number of items.
    exact_items : int | None
        Required number of items.
    min_item, max_item : float | None
        Inclusive bounds on numeric items.
    """

    def __init__(
        self,
        item_type: type,
        min_items: int = 1,
        exact_items: int | None = None,
        min_item: float | None = None,
        max_item: float | None = None,
        **kwargs: Any,
    ) -> None:
        super().__init__(**kwargs)
        self.item_type = item_type
        self.min_items = min_items
        self.exact_items = exact_items
        self.min_item = min_item
        self.max_item = max_item

    def _item(self, item: Any) -> Any:
        if isinstance(item, bool):
            raise ValidationError(f"Items must be of type {self.item_type.__name__}.")
        if self.item_type is float and isinstance(item, int):
            item = float(item)
        if not isinstance(item, self.item_type):
            raise ValidationError(f"Items must be of type {self.item_type.__name__}.")
        if self.min_item is not None and item < self.min_item:
            raise ValidationError(f"Items must be greater than or equal to {self.min_item}.")
        if self.max_item is not None and item > self.max_item:
            raise ValidationError(f"Items must be less than or equal to {self.max_item}.")
        return item

    def to_python(self, value: Any) -> tuple[Any, ...]:
        if value in self.empty_values:
            return ()
        if not isinstance(value, list | tuple):
            raise ValidationError("Enter a list.")
        return tuple(self._item(item) for item in value)

    def validate(self, value: tuple[Any, ...]) -> None:
        super().validate(value)
        if self.exact_items is not None and len(value) != self.exact_items:
            raise ValidationError(f"Enter exactly {self.exact_items} items.")
        if len(value) < self.min_items:
            raise ValidationError(f"Enter at least {self.min_items} items.")


class NestedTupleField(forms.Field):
    """List of non-empty string lists (per-class keyword sets)."""

    def to_python(self, value: Any) -> tuple[tuple[str, ...], ...]:
        if value in self.empty_values:
            return ()
        if not isinstance(value, list | tuple) or not all(isinstance(group, list | tuple) for group in value):
            raise ValidationError("Enter a list of lists.")
        if any(not group or not all(isinstance(word, str) for word in group) for group in value):
            raise ValidationError("Every inner list must be a non-empty list of strings.")
        return tuple(tuple(group) for group in value)


class WorldForm(forms.Form):
    """Validates the ``[world]`` section."""

    class_names = TupleField(str, min_items=2)
    keywords = NestedTupleField()
    background_tokens = TupleField(str)
    boost = forms.FloatField(min_value=1.0)
    length_range = TupleField(int, exact_items=2, min_item=3)
    background_mix = forms.FloatField(min_value=0.0, max_value=1.0)
    concentration = forms.FloatField(validators=[positive])
    rare_tokens = forms.IntegerField(min_value=0)
    rare_share = forms.FloatField(validators=[positive, below_one])
    seed = forms.IntegerField(min_value=0)

    def clean_length_range(self) -> tuple[int, ...]:
        low, high = self.cleaned_data["length_range"]
        if low > high or high > DEFAULT_MAX_LEN:
            raise ValidationError(f"Range must satisfy min <= max <= {DEFAULT_MAX_LEN}.")
        return (low, high)

    def clean(self) -> dict[str, Any]:
        cleaned = super().clean() or {}
        names, keywords = cleaned.get("class_names"), cleaned.get("keywords")
        if names is not None and keywords is not None and len(names) != len(keywords):
            self.add_error("keywords", "Give one keyword list per class.")
        return cleaned


class ModelsForm(forms.Form):
    """Validates the ``[models]`` section."""

    teacher_dim = forms.IntegerField(min_value=1)
    student_dim = forms.IntegerField(min_value=1)
    hash_buckets = forms.IntegerField(min_value=1)
    init_scale = forms.FloatField(validators=[positive])
    teacher_epochs = forms.IntegerField(min_value=1)
    teacher_lr = forms.FloatField(validators=[positive])
    teacher_batch_size = forms.IntegerField(min_value=1)
    teacher_optimizer = forms.ChoiceField(choices=OPTIMIZER_CHOICES)
    generator_order = forms.IntegerField(min_value=1)
    generator_smoothing = forms.FloatField(validators=[positive])
    prompter_dim = forms.IntegerField(min_value=1)
    prompter_window = forms.IntegerField(min_value=1)
    prompter_pretrain_epochs = forms.IntegerField(min_value=0)
    prompter_pretrain_lr = forms.FloatField(validators=[positive])
    prompter_pretrain_batch_size = forms.IntegerField(min_value=1)

    def clean(self) -> dict[str, Any]:
        cleaned = super().clean() or {}
        teacher, student = cleaned.get("teacher_dim"), cleaned.get("student_dim")
        if teacher is not None and student is not None and student > teacher:
            self.add_error("student_dim", "Ensure this value is less than or equal to models.teacher_dim.")
        return cleaned


class KDForm(forms.Form):
    """Validates the ``[kd]`` section."""

    alpha = forms.FloatField(min_value=0.0, max_value=1.0)
    temperature = forms.FloatField(validators=[positive])
    lr = forms.FloatField(min_value=0.0)
    batch_size = forms.IntegerField(min_value=1)
    epochs = forms.IntegerField(min_value=1)
    optimizer = forms.ChoiceField(choices=OPTIMIZER_CHOICES)
    weight_decay = forms.FloatField(min_value=0.0)
    schedule = forms.ChoiceField(choices=[("constant", "Constant"), ("warmup_linear", "Linear warmup and decay")])
    warmup_fraction = forms.FloatField(min_value=0.0, validators=[below_one])


class RLForm(forms.Form):
    """Validates the ``[rl]`` section."""

    reward = forms.ChoiceField(choices=[(mode, mode) for mode in RewardMode.CHOICES])
    penalty_weight = forms.FloatField(min_value=0.0)
    penalty_cap = forms.FloatField(min_value=0.0)
    lr = forms.FloatField(min_value=0.0)
    optimizer = forms.ChoiceField(choices=OPTIMIZER_CHOICES)
    rollouts = forms.IntegerField(min_value=1)
    initial_words = TupleField(str)
    prompts_per_epoch = forms.IntegerField(min_value=1)
    prompt_length = forms.IntegerField(min_value=2)
    baseline = forms.ChoiceField(choices=[("none", "None"), ("mean", "Moving mean")])
    accumulate = forms.IntegerField(min_value=1)
    symmetric_penalty = forms.BooleanField(required=False)


class DecodeForm(forms.Form):
    """Validates the ``[decode]`` section."""

    top_k = forms.IntegerField(min_value=1)
    top_p = forms.FloatField(validators=[positive, MaxValueValidator(1.0)])
    max_new_tokens = forms.IntegerField(min_value=0)
    max_len = forms.IntegerField(validators=[MinValueValidator(1), MaxValueValidator(DEFAULT_MAX_LEN)])


class EvalForm(forms.Form):
    """Validates the ``[eval]`` section."""

    labeled_size = forms.IntegerField(min_value=10)
    unlabeled_size = forms.IntegerField(min_value=1)
    background_size = forms.IntegerField(min_value=0)
    sweep_lengths = TupleField(int, min_item=MIN_SWEEP_LENGTH, max_item=MAX_SWEEP_LENGTH)
    transfer_size = forms.IntegerField(min_value=1)
    template_set = forms.ChoiceField(choices=[(name, name) for name in TEMPLATE_SETS])
    random_text_size = forms.IntegerField(min_value=0)


class ExperimentForm(forms.Form):
    """Validates the top-level keys."""

    method = forms.ChoiceField(choices=[(method, method) for method in METHODS])
    seeds = TupleField(int, min_item=0)
    output_dir = forms.CharField(required=False)

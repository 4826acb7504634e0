"""
Run registry model.

One row per finished distillation run. Report files under the output
directory remain the source of truth; the table indexes them.
"""

from django.db import models


class Method(models.TextChoices):
    """Distillation methods a run can use."""

    VANILLA = "vanilla", "Vanilla-KD"
    RANDOM_TEXT = "random_text", "Random Text"
    UNLABEL = "unlabel", "Unlabel-KD"
    MANUAL = "manual", "PromptDFD-Manual"
    RL = "rl", "PromptDFD-RL"


class ExperimentRun(models.Model):
    """
    A finished distillation run.

    Attributes
    ----------
    method : str
        Distillation method.
    seed : int
        Run seed.
    config_hash : str
        Hash of the resolved config of the run.
    accuracy : float
        Student test accuracy.
    agreement : float
        Teacher/student test agreement.
    report_path : str
        Directory holding the run's report files.
    created_at : datetime
        Timestamp when the run was recorded.
    """

    method = models.CharField(
        max_length=20,
        choices=Method.choices,
        help_text="Distillation method",
    )
    seed = models.BigIntegerField(
        help_text="Run seed",
    )
    config_hash = models.CharField(
        max_length=64,
        help_text="SHA-256 of the resolved run config",
    )
    accuracy = models.FloatField(
        help_text="Student accuracy on the test split",
    )
    agreement = models.FloatField(
        help_text="Teacher/student agreement on the test split",
    )
    report_path = models.CharField(
        max_length=500,
        help_text="Directory holding the run's report files",
    )
    created_at = models.DateTimeField(
        auto_now_add=True,
        help_text="Timestamp when the run was recorded",
    )

    class Meta:
        """Meta options for ExperimentRun model."""

        db_table = "experiment_runs"
        ordering = ["-created_at"]
        indexes = [
            models.Index(fields=["method"], name="experiment_method_idx"),
            models.Index(fields=["config_hash"], name="experiment_config_hash_idx"),
        ]

    def __str__(self) -> str:
        return f"{self.method} seed={self.seed} agreement={self.agreement:.4f}"

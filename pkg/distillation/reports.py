"""Per-run training logs shared by every distillation method."""

from dataclasses import dataclass, field

from corpus.vocab import TokenSeq


@dataclass(frozen=True)
class EpochRecord:
    """One row of the run report."""

    epoch: int
    loss: float
    dev_accuracy: float | None = None
    agreement: float | None = None


@dataclass
class RunReport:
    """
    Training log of one distillation run.

    Attributes
    ----------
    method : str
        Method that produced the student.
    epochs : list[EpochRecord]
        Per-epoch loss and monitoring metrics.
    prompts : list[tuple[int, TokenSeq]]
        ``(epoch, prompt)`` for every prompt used (prompt-driven methods only).
    q_means : list[float]
        Mean Q value per epoch (reinforced prompter only).
    completions : int
        Generator completions run: prefix rollouts plus one per prompt.
    """

    method: str
    epochs: list[EpochRecord] = field(default_factory=list)
    prompts: list[tuple[int, TokenSeq]] = field(default_factory=list)
    q_means: list[float] = field(default_factory=list)
    completions: int = 0

    @property
    def final(self) -> EpochRecord | None:
        return self.epochs[-1] if self.epochs else None

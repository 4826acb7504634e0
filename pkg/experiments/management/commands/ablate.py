from experiments.management.commands._base import ExperimentCommand
from experiments.services import PipelineService


class Command(ExperimentCommand):
    help = "Run the reward/penalty ablations and the word-order and keyword analyses"

    def run(self, pipeline: PipelineService) -> None:
        for comparison in pipeline.ablate():
            self.stdout.write(
                f"{comparison.first} vs {comparison.second}: "
                f"{comparison.median_first:.4f} vs {comparison.median_second:.4f} "
                f"(wins={comparison.wins} losses={comparison.losses} p={comparison.p_value:.4f})"
            )
        self.stdout.write(self.style.SUCCESS(f"ablation.csv, shuffle.csv and keywords.csv written to {pipeline.out_dir}"))

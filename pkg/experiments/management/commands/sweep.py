from experiments.management.commands._base import ExperimentCommand
from experiments.services import PipelineService


class Command(ExperimentCommand):
    help = "Sweep the prompt length of the reinforced method and write sweep.csv"

    def run(self, pipeline: PipelineService) -> None:
        for length, value in pipeline.sweep().items():
            self.stdout.write(f"length={length}: median agreement={value:.4f}")
        self.stdout.write(self.style.SUCCESS(f"sweep.csv written to {pipeline.out_dir}"))

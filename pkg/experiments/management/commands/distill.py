from experiments.management.commands._base import ExperimentCommand
from experiments.services import PipelineService


class Command(ExperimentCommand):
    help = "Distill a student with the chosen method, one run per seed"

    accepts_method = True

    def run(self, pipeline: PipelineService) -> None:
        for outcome in pipeline.distill():
            self.stdout.write(
                f"{outcome.method} seed={outcome.seed}: "
                f"accuracy={outcome.metrics.accuracy:.4f} agreement={outcome.metrics.agreement:.4f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Reports written to {pipeline.out_dir / 'distill'}"))

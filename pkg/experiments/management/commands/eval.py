from experiments.management.commands._base import ExperimentCommand
from experiments.services import PipelineService


class Command(ExperimentCommand):
    help = "Score distilled students on the test split and summarize the run registry"

    accepts_method = True

    def run(self, pipeline: PipelineService) -> None:
        for outcome in pipeline.evaluate():
            self.stdout.write(
                f"{outcome.method} seed={outcome.seed}: "
                f"accuracy={outcome.metrics.accuracy:.4f} agreement={outcome.metrics.agreement:.4f}"
            )
        summary = pipeline.registry_summary()
        if summary:
            self.stdout.write("Median agreement per method:")
            for method, value in summary.items():
                self.stdout.write(f"  {method}: {value:.4f}")

from experiments.management.commands._base import ExperimentCommand
from experiments.services import PipelineService


class Command(ExperimentCommand):
    help = "Fit the n-gram content generator on the unlabeled corpus and write generator.ckpt"

    def run(self, pipeline: PipelineService) -> None:
        generator = pipeline.pretrain_generator()
        self.stdout.write(self.style.SUCCESS(f"Generator (checksum {generator.checksum()[:12]}) written to {pipeline.out_dir}"))

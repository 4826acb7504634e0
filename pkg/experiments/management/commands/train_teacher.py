from experiments.management.commands._base import ExperimentCommand
from experiments.services import PipelineService


class Command(ExperimentCommand):
    help = "Train the teacher classifier on the labeled split and write teacher.ckpt"

    def run(self, pipeline: PipelineService) -> None:
        pipeline.train_teacher()
        self.stdout.write(self.style.SUCCESS(f"Teacher written to {pipeline.out_dir}"))

from experiments.management.commands._base import ExperimentCommand
from experiments.services import PipelineService


class Command(ExperimentCommand):
    help = "Realize the synthetic world and write world.ckpt"

    def run(self, pipeline: PipelineService) -> None:
        world = pipeline.gen_world()
        self.stdout.write(
            self.style.SUCCESS(f"World with {world.num_classes} classes and {len(world.vocab)} tokens written to {pipeline.out_dir}")
        )

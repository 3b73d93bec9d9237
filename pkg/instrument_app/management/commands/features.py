from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Compute the CQT cache for all stored segments and normalization statistics on the training split'

    def add_command_arguments(self, parser):
        parser.add_argument('--magnitude-scale', choices=['linear', 'log1p'], help='CQT magnitude compression')

    def config_overrides(self, options):
        return {'cqt': {'magnitude_scale': options.get('magnitude_scale')}}

    def run(self, options):
        summary = self.pipeline.compute_features()
        self.stdout.write(
            f"{summary['segments']} segments ({summary['cached']} already cached) in {summary['cache_dir']}"
        )
        self.stdout.write(self.style.SUCCESS(f"Training statistics: {summary['stats_path']}"))

from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Pick per-instrument decision thresholds that maximize F1 on the training predictions'

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True)
        self.add_pitch_arguments(parser)
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--results-dir', help='Default: <checkpoint dir>/<pitch source>')

    def config_overrides(self, options):
        return {'pitch': {'salience_dir': options.get('salience_dir')}}

    def run(self, options):
        thresholds, path = self.pipeline.tune(
            options['checkpoint'],
            pitch_source=options.get('pitch_source'),
            salience_dir=options.get('salience_dir'),
            batch_size=options.get('batch_size'),
            output_dir=options.get('results_dir'),
        )
        for name, value in zip(self.pipeline.names, thresholds.values):
            self.stdout.write(f"{name:<10} {value:.2f}")
        self.stdout.write(self.style.SUCCESS(f"Thresholds: {path}"))

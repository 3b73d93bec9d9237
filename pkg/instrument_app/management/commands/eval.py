from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Frame-level precision, recall and F1 per instrument of a checkpoint on the test split'

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--thresholds', help='Threshold file; default: tune on the stored training predictions')
        self.add_pitch_arguments(parser)
        parser.add_argument('--split', default='test', choices=['train', 'test'])
        parser.add_argument('--method', help='Row label in the report')
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--results-dir', help='Default: <checkpoint dir>/<pitch source>')

    def config_overrides(self, options):
        return {'pitch': {'salience_dir': options.get('salience_dir')}}

    def run(self, options):
        report, path = self.pipeline.evaluate(
            options['checkpoint'],
            thresholds_path=options.get('thresholds'),
            pitch_source=options.get('pitch_source'),
            salience_dir=options.get('salience_dir'),
            split=options['split'],
            method=options.get('method'),
            batch_size=options.get('batch_size'),
            output_dir=options.get('results_dir'),
        )
        self.stdout.write(report.format_table())
        self.stdout.write(self.style.SUCCESS(f"Report: {path}"))

import numpy as np

from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Instrument roll of an arbitrary audio file'

    def add_command_arguments(self, parser):
        parser.add_argument('audio', help='Audio file to analyze')
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--salience-dir', help='Estimated .sal files, required by pitch-aware variants')
        parser.add_argument('--thresholds', help='Threshold file used to binarize the roll')
        parser.add_argument('--output', help='Output .npz; default <output dir>/predictions/<name>.npz')
        parser.add_argument('--batch-size', type=int)

    def config_overrides(self, options):
        return {'pitch': {'salience_dir': options.get('salience_dir')}}

    def run(self, options):
        path, probabilities = self.pipeline.predict(
            options['checkpoint'],
            options['audio'],
            salience_dir=options.get('salience_dir'),
            thresholds_path=options.get('thresholds'),
            output=options.get('output'),
            batch_size=options.get('batch_size'),
        )
        self.stdout.write(f"{probabilities.shape[0]} frames")
        for name, mean in zip(self.pipeline.names, np.mean(probabilities, axis=0)):
            self.stdout.write(f"{name:<10} mean likelihood {mean:.3f}")
        self.stdout.write(self.style.SUCCESS(f"Prediction roll: {path}"))

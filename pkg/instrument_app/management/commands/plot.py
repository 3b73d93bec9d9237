from pathlib import Path

from ...services.plotting import render_plots
from ...services.provenance import file_hash
from ...services.store import PredictionBundle
from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Render ground truth and binarized predictions as one piano-roll strip image per clip'

    def add_command_arguments(self, parser):
        parser.add_argument('bundles', nargs='+', help='Prediction bundles (.npz) written by eval or tune_thresholds')
        parser.add_argument('--clips', nargs='*', help='Clip IDs to draw; default all')
        parser.add_argument('--figure-dir', help='Default: <output dir>/figures')

    def run(self, options):
        bundles = [PredictionBundle.load(path) for path in options['bundles']]
        provenance = self.pipeline.provenance({f"bundle:{path}": file_hash(path) for path in options['bundles']})
        out_dir = options.get('figure_dir') or Path(self.config.paths.output_dir) / 'figures'
        index = render_plots(bundles, out_dir, self.pipeline.names, clip_ids=options.get('clips') or None,
                             provenance=provenance)
        self.stdout.write(self.style.SUCCESS(f"Figures: {index}"))

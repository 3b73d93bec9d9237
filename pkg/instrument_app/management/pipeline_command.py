"""
Base class of the pipeline management commands: shared flags, effective config
and the machine-readable error record
"""
import logging

from django.core.management.base import BaseCommand, CommandError

from ..exceptions import PipelineError
from ..services.config import load_pipeline_config
from ..services.pipeline import PipelineService

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """
    Subclasses declare their own flags in add_command_arguments, map them onto
    the config tree in config_overrides and do their work in run().
    """

    requires_system_checks = []
    # config paths that must exist before run() starts
    required_paths = ('catalog_path',)

    def add_arguments(self, parser):
        parser.add_argument('--config', help='YAML pipeline config; flags override its values')
        parser.add_argument('--catalog', help='Instrument catalog YAML')
        parser.add_argument('--dataset-root', help='MusicNet-style dataset directory')
        parser.add_argument('--cache-dir', help='Segment store and feature cache directory')
        parser.add_argument('--output-dir', help='Directory for runs and reports')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def config_overrides(self, options: dict) -> dict:
        return {}

    def _overrides(self, options: dict) -> dict:
        overrides = {
            'catalog_path': options.get('catalog'),
            'paths': {
                'dataset_root': options.get('dataset_root'),
                'cache_dir': options.get('cache_dir'),
                'output_dir': options.get('output_dir'),
            },
        }
        for section, values in self.config_overrides(options).items():
            if isinstance(values, dict):
                overrides.setdefault(section, {}).update(values)
            else:
                overrides[section] = values
        return overrides

    def handle(self, *args, **options):
        try:
            self.config = load_pipeline_config(options.get('config'), self._overrides(options))
            self.config.require_paths(*self.required_paths)
            self.stdout.write('# effective config')
            self.stdout.write(self.config.to_yaml())
            self.pipeline = PipelineService(self.config)
            self.run(options)
        except PipelineError as e:
            logger.error(e.message)
            self.stderr.write(e.to_json())
            raise CommandError(e.message) from e

    def run(self, options: dict):
        raise NotImplementedError

    def add_model_arguments(self, parser):
        parser.add_argument('--variant', help='baseline2d, resblock1d, cqt_hsf, cqt_pitch_f or cqt_pitch_c')
        parser.add_argument('--hsf-order', type=int, help='HSF order n (1..5) for cqt_hsf')
        parser.add_argument('--width', type=int, help='Channel width of the network')

    def add_pitch_arguments(self, parser):
        parser.add_argument('--pitch-source', choices=['ground_truth', 'estimated'],
                            help='Pitch salience from the label pitch roll or from .sal files')
        parser.add_argument('--salience-dir', help='Directory of estimated .sal salience files')

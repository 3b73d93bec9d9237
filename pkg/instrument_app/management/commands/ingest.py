from ...services.ingest import SPLIT_LAYOUT
from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Segment a MusicNet-style dataset into 3-second examples with frame-level label and pitch rolls'

    def add_command_arguments(self, parser):
        parser.add_argument('--split-manifest', help='CSV with clip_id,split columns; default: directory layout')
        parser.add_argument('--workers', type=int, help='Worker processes for decoding and segmentation')

    def config_overrides(self, options):
        return {
            'paths': {'split_manifest': options.get('split_manifest')},
            'workers': options.get('workers'),
        }

    def run(self, options):
        summary = self.pipeline.ingest()

        total = sum(entry['clips'] for entry in summary.values())
        cached = sum(entry['cached'] for entry in summary.values())
        if total and cached == total:
            self.stdout.write(f"Nothing to do: all {total} clips already ingested with identical inputs")

        for split in SPLIT_LAYOUT:
            entry = summary[split]
            self.stdout.write(
                f"{split}: {entry['clips']} clips, {entry['segments']} segments ({entry['cached']} clips cached)"
            )
            histogram = ', '.join(f"{n} instr.: {count}" for n, count in entry['instrument_histogram'].items())
            if histogram:
                self.stdout.write(f"  clips by number of catalog instruments: {histogram}")
        self.stdout.write(self.style.SUCCESS(f"Segment store: {self.config.paths.store_dir}"))

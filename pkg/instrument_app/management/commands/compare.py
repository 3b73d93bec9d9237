from pathlib import Path

from ...services.config import PITCH_SOURCES
from ...services.evaluation import best_method_per_instrument, format_method_table
from ...services.pipeline import load_reports, pitch_source_of
from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Combine evaluation reports into one method-by-instrument F1 table'

    def add_command_arguments(self, parser):
        parser.add_argument('reports', nargs='+', help='report.json files written by eval')
        parser.add_argument('--table', help='Also write the table to this text file')

    def run(self, options):
        reports = load_reports(options['reports'])
        # methods without pitch input first, then grouped by pitch source
        order = {'': 0, **{source: i + 1 for i, source in enumerate(PITCH_SOURCES)}}
        reports.sort(key=lambda report: order[pitch_source_of(report.method)])

        lines = [format_method_table(reports, mark_best=True), '', 'Best method per instrument:']
        for name, method in best_method_per_instrument(reports).items():
            lines.append(f"  {name:<10} {method}")
        text = '\n'.join(lines)

        self.stdout.write(text)
        if options.get('table'):
            Path(options['table']).write_text(text + '\n')

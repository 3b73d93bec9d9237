from ...exceptions import TrainingDivergedError
from ...services.nets import count_conv_layers
from ..pipeline_command import PipelineCommand


class Command(PipelineCommand):
    help = 'Train one network variant with the weighted cross entropy and SGD'

    def add_command_arguments(self, parser):
        self.add_model_arguments(parser)
        self.add_pitch_arguments(parser)
        parser.add_argument('--epochs', type=int, help='Maximum number of epochs')
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--lr', type=float, help='Initial learning rate')
        parser.add_argument('--momentum', type=float)
        parser.add_argument('--seed', type=int)
        parser.add_argument('--max-train-clips', type=int, help='Use only the first N training clips')
        parser.add_argument('--validation-fraction', type=float,
                            help='Share of training clips held out for model selection')
        parser.add_argument('--weight-cap', type=float, help='Upper bound of the positive class weights')
        parser.add_argument('--no-normalize', action='store_true', help='Feed raw CQT magnitudes')
        parser.add_argument('--run-name', help='Run directory name below the output directory')
        parser.add_argument('--resume', help='last.pt checkpoint of an interrupted run')
        parser.add_argument('--device', help='torch device, default cuda when available')

    def config_overrides(self, options):
        return {
            'model': {
                'variant': options.get('variant'),
                'hsf_order': options.get('hsf_order'),
                'width': options.get('width'),
            },
            'pitch': {
                'source': options.get('pitch_source'),
                'salience_dir': options.get('salience_dir'),
            },
            'train': {
                'max_epochs': options.get('epochs'),
                'batch_size': options.get('batch_size'),
                'initial_lr': options.get('lr'),
                'momentum': options.get('momentum'),
                'seed': options.get('seed'),
                'max_train_clips': options.get('max_train_clips'),
                'validation_fraction': options.get('validation_fraction'),
            },
            'loss': {'weight_cap': options.get('weight_cap')},
            'normalize': False if options.get('no_normalize') else None,
        }

    def run(self, options):
        spec = self.config.model.spec()
        self.stdout.write(f"{spec.label}: {count_conv_layers(spec)} convolutional layers, input {spec.input_arrangement}")
        try:
            run, result = self.pipeline.train(
                run_name=options.get('run_name'),
                resume_from=options.get('resume'),
                device=options.get('device'),
            )
        except TrainingDivergedError:
            self.stdout.write(self.style.ERROR('Training diverged; lower the learning rate or check the inputs'))
            raise

        self.stdout.write(f"Best epoch {result.best_epoch}: validation macro F1 {result.best_val_macro_f1:.3f}")
        self.stdout.write(self.style.SUCCESS(f"Checkpoint: {result.best_checkpoint} (run {run.run_name})"))

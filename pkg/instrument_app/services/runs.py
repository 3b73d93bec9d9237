"""
Training run and evaluation registry
"""
import logging
from typing import Optional

from ..models import Evaluation, TrainingRun

logger = logging.getLogger(__name__)


class RunService:
    """Handles all database operations for TrainingRun and Evaluation"""

    def find_by_checkpoint(self, checkpoint_path: str) -> Optional[TrainingRun]:
        return TrainingRun.objects.filter(checkpoint_path=str(checkpoint_path)).order_by('-updated_at').first()

    def start_run(self, data: dict) -> TrainingRun:
        """
        Register a run, or reset an existing run of the same name to running.

        Args:
            data: Dictionary with run_name, variant, hsf_order, pitch_source,
                config and geometry_hash

        Returns:
            TrainingRun instance
        """
        data = dict(data)
        run_name = data.pop('run_name')
        data['status'] = TrainingRun.STATUS_RUNNING

        run, created = TrainingRun.objects.update_or_create(
            run_name=run_name,
            defaults=data
        )
        logger.info(f"{'Started' if created else 'Restarted'} run {run_name}")
        return run

    def complete_run(self, run: TrainingRun, checkpoint_path: str, best_epoch: int,
                     best_val_macro_f1: float) -> TrainingRun:
        run.checkpoint_path = str(checkpoint_path)
        run.best_epoch = best_epoch
        run.best_val_macro_f1 = best_val_macro_f1
        run.status = TrainingRun.STATUS_COMPLETED
        run.save()
        return run

    def mark_diverged(self, run: TrainingRun) -> TrainingRun:
        run.status = TrainingRun.STATUS_DIVERGED
        run.save(update_fields=['status', 'updated_at'])
        return run

    def record_evaluation(self, data: dict) -> Evaluation:
        """
        Store an evaluation result.

        Args:
            data: Dictionary with method, checkpoint_path, report_path,
                macro_f1, per_instrument, thresholds

        Returns:
            Evaluation instance
        """
        data = dict(data)
        data.setdefault('run', self.find_by_checkpoint(data['checkpoint_path']))
        return Evaluation.objects.create(**data)

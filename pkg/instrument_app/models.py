from django.db import models


class Clip(models.Model):
    """
    One ingested recording and where its segments live
    """
    SPLIT_TRAIN = 'train'
    SPLIT_TEST = 'test'
    SPLIT_CHOICES = [(SPLIT_TRAIN, 'Train'), (SPLIT_TEST, 'Test')]

    clip_id = models.CharField(max_length=255, primary_key=True)
    split = models.CharField(max_length=16, choices=SPLIT_CHOICES)
    manifest_order = models.IntegerField(default=0)
    audio_path = models.CharField(max_length=1024)
    labels_path = models.CharField(max_length=1024)
    duration_samples = models.BigIntegerField()
    n_segments = models.IntegerField()
    n_instruments = models.IntegerField(default=0)  # catalog instruments used
    source_hash = models.CharField(max_length=64)
    store_dir = models.CharField(max_length=1024)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        db_table = 'clips'
        verbose_name = 'Clip'
        verbose_name_plural = 'Clips'
        ordering = ['split', 'manifest_order', 'clip_id']
        indexes = [
            models.Index(fields=['split', 'manifest_order'], name='clips_split_order_idx'),
        ]

    def __str__(self):
        return f"{self.clip_id} ({self.split})"


class TrainingRun(models.Model):
    """
    A training run and the checkpoint it produced
    """
    STATUS_RUNNING = 'running'
    STATUS_COMPLETED = 'completed'
    STATUS_DIVERGED = 'diverged'
    STATUS_CHOICES = [
        (STATUS_RUNNING, 'Running'),
        (STATUS_COMPLETED, 'Completed'),
        (STATUS_DIVERGED, 'Diverged'),
    ]

    run_name = models.CharField(max_length=255, unique=True)
    variant = models.CharField(max_length=32)
    hsf_order = models.IntegerField(null=True, blank=True)
    pitch_source = models.CharField(max_length=32, null=True, blank=True)
    config = models.JSONField(default=dict)
    geometry_hash = models.CharField(max_length=64)
    checkpoint_path = models.CharField(max_length=1024, null=True, blank=True)
    best_epoch = models.IntegerField(null=True, blank=True)
    best_val_macro_f1 = models.FloatField(null=True, blank=True)
    status = models.CharField(max_length=16, choices=STATUS_CHOICES, default=STATUS_RUNNING)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        db_table = 'training_runs'
        verbose_name = 'Training run'
        verbose_name_plural = 'Training runs'

    def __str__(self):
        return f"{self.run_name} [{self.variant}, {self.status}]"


class Evaluation(models.Model):
    """
    Frame-level F1 report of one checkpoint on the test split
    """
    run = models.ForeignKey(
        TrainingRun,
        on_delete=models.SET_NULL,
        null=True,
        blank=True,
        related_name='evaluations',
    )
    method = models.CharField(max_length=255)
    checkpoint_path = models.CharField(max_length=1024)
    report_path = models.CharField(max_length=1024)
    macro_f1 = models.FloatField()
    per_instrument = models.JSONField(default=dict)
    thresholds = models.JSONField(default=list)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        db_table = 'evaluations'
        verbose_name = 'Evaluation'
        verbose_name_plural = 'Evaluations'

    def __str__(self):
        return f"{self.method}: {self.macro_f1:.3f}"

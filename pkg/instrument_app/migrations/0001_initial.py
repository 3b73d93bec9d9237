# Generated by Django 5.2.8 on 2026-10-18 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Clip',
            fields=[
                ('clip_id', models.CharField(max_length=255, primary_key=True, serialize=False)),
                ('split', models.CharField(choices=[('train', 'Train'), ('test', 'Test')], max_length=16)),
                ('manifest_order', models.IntegerField(default=0)),
                ('audio_path', models.CharField(max_length=1024)),
                ('labels_path', models.CharField(max_length=1024)),
                ('duration_samples', models.BigIntegerField()),
                ('n_segments', models.IntegerField()),
                ('n_instruments', models.IntegerField(default=0)),
                ('source_hash', models.CharField(max_length=64)),
                ('store_dir', models.CharField(max_length=1024)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Clip',
                'verbose_name_plural': 'Clips',
                'db_table': 'clips',
                'ordering': ['split', 'manifest_order', 'clip_id'],
                'indexes': [models.Index(fields=['split', 'manifest_order'], name='clips_split_order_idx')],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_name', models.CharField(max_length=255, unique=True)),
                ('variant', models.CharField(max_length=32)),
                ('hsf_order', models.IntegerField(blank=True, null=True)),
                ('pitch_source', models.CharField(blank=True, max_length=32, null=True)),
                ('config', models.JSONField(default=dict)),
                ('geometry_hash', models.CharField(max_length=64)),
                ('checkpoint_path', models.CharField(blank=True, max_length=1024, null=True)),
                ('best_epoch', models.IntegerField(blank=True, null=True)),
                ('best_val_macro_f1', models.FloatField(blank=True, null=True)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('diverged', 'Diverged')], default='running', max_length=16)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Training run',
                'verbose_name_plural': 'Training runs',
                'db_table': 'training_runs',
            },
        ),
        migrations.CreateModel(
            name='Evaluation',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('method', models.CharField(max_length=255)),
                ('checkpoint_path', models.CharField(max_length=1024)),
                ('report_path', models.CharField(max_length=1024)),
                ('macro_f1', models.FloatField()),
                ('per_instrument', models.JSONField(default=dict)),
                ('thresholds', models.JSONField(default=list)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='evaluations', to='instrument_app.trainingrun')),
            ],
            options={
                'verbose_name': 'Evaluation',
                'verbose_name_plural': 'Evaluations',
                'db_table': 'evaluations',
            },
        ),
    ]

"""
End-to-end pipeline steps behind the management commands
"""
import logging
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from tqdm import tqdm

from ..exceptions import MissingInputsError, MissingSalienceError, MissingThresholdsError, TrainingDivergedError
from .catalog import InstrumentCatalog, load_catalog
from .clips import ClipService
from .config import PITCH_ESTIMATED, PITCH_SOURCES, PipelineConfig
from .datasets import InputAssembler, SegmentDataset, split_validation
from .evaluation import EvalReport, ThresholdVector, frame_f1, tune_thresholds
from .features import FeatureCache, FeatureStats
from .inference import predict_clips, predict_file, save_prediction_roll
from .ingest import IngestService, discover_clips
from .nets import ModelSpec, build_model
from .provenance import content_hash, file_hash, stamp
from .runs import RunService
from .store import PredictionBundle, SegmentStore
from .training import Trainer, compute_class_weights, load_checkpoint, model_from_checkpoint, seed_everything

logger = logging.getLogger(__name__)

TRAIN_BUNDLE = 'train_predictions.npz'
TEST_BUNDLE = 'test_predictions.npz'
THRESHOLDS_FILE = 'thresholds.json'
REPORT_FILE = 'report.json'
REPORT_TABLE = 'report.txt'


def method_label(spec: ModelSpec, pitch_source: str) -> str:
    """Row label of a method, e.g. 'CQT+HSF-3 (ground truth)'."""
    if not spec.uses_pitch:
        return spec.label
    return f"{spec.label} ({pitch_source.replace('_', ' ')})"


def pitch_source_of(method: str) -> str:
    """Pitch source named at the end of a method label, or '' for CQT-only methods."""
    for source in PITCH_SOURCES:
        if method.endswith(f"({source.replace('_', ' ')})"):
            return source
    return ''


def default_run_name(spec: ModelSpec, pitch_source: str, seed: int) -> str:
    parts = [spec.variant]
    if spec.hsf_order:
        parts.append(f"n{spec.hsf_order}")
    if spec.uses_pitch:
        parts.append(pitch_source)
    parts.append(f"seed{seed}")
    return '-'.join(parts)


class PipelineService:
    """
    Wires the ingest, feature, training and evaluation services for one
    effective configuration.
    """

    def __init__(self, config: PipelineConfig, catalog: Optional[InstrumentCatalog] = None):
        self.config = config
        self.catalog = catalog or load_catalog(config.catalog_path)
        self.store = SegmentStore(config.paths.store_dir)
        self.feature_cache = FeatureCache(config.paths.feature_dir, config.cqt)
        self.clip_service = ClipService()
        self.run_service = RunService()

    @property
    def names(self) -> list:
        return self.catalog.names

    @property
    def geometry_hash(self) -> str:
        return self.config.geometry_hash(self.catalog)

    def provenance(self, inputs: dict) -> dict:
        return stamp(self.config.to_dict(), inputs)

    def _clip_hashes(self, clip_ids: list) -> dict:
        hashes = {}
        for clip_id in clip_ids:
            clip = self.clip_service.find_by_id(clip_id)
            hashes[f"clip:{clip_id}"] = clip.source_hash if clip else ''
        return hashes

    # ingest and features

    def ingest(self, workers: Optional[int] = None) -> dict:
        """
        Segment every clip of the dataset into the store.

        Returns:
            Per-split summary from IngestService.ingest
        """
        paths = self.config.paths
        manifests = discover_clips(paths.dataset_root, paths.split_manifest)
        service = IngestService(
            self.catalog,
            self.store,
            self.clip_service,
            self.config.segment_geometry_hash(self.catalog),
        )
        provenance = self.provenance({'catalog': content_hash(self.catalog.to_dict())})
        return service.ingest(manifests, workers=workers or self.config.workers, provenance=provenance)

    def clip_ids(self, split: str) -> list:
        return [clip.clip_id for clip in self.clip_service.find_by_split(split)]

    def segment_sources(self, split: str, clip_ids: list) -> list:
        """
        Stored segment files of the given clips.

        Raises:
            MissingInputsError: If a registered clip has no stored segments
        """
        sources, missing = [], []
        for clip_id in clip_ids:
            paths = self.store.clip_segments(split, clip_id)
            if not paths:
                missing.append(clip_id)
            sources.extend(paths)
        if missing:
            raise MissingInputsError(
                f"No stored segments for {len(missing)} {split} clips; run ingest",
                {'split': split, 'clips': missing},
            )
        return sources

    def cached_frames(self, split: str, clip_ids: list, counts: Optional[dict] = None) -> Iterator[np.ndarray]:
        """Fill the CQT cache for one split, yielding the valid frames of each segment as it goes."""
        counts = counts if counts is not None else {'segments': 0, 'cached': 0}
        for path in tqdm(self.segment_sources(split, clip_ids), desc=f"cqt {split}", unit='segment'):
            record = self.store.read_segment(path)
            counts['cached'] += int(self.feature_cache.has(record.clip_id, record.segment_index))
            raster = self.feature_cache.get(record)
            counts['segments'] += 1
            yield raster.data[:record.n_valid_frames]

    def compute_features(self) -> dict:
        """
        Fill the CQT cache for all stored segments and derive normalization
        statistics from the training split.
        """
        train_ids = self.clip_ids('train')
        test_ids = self.clip_ids('test')
        if not train_ids:
            raise MissingInputsError('No training clips registered; run ingest first')

        counts = {'segments': 0, 'cached': 0}
        stats = FeatureStats.from_rasters(self.cached_frames('train', train_ids, counts))
        for _ in self.cached_frames('test', test_ids, counts):
            pass
        counts['stats_path'] = str(self.feature_cache.save_stats(stats))
        counts['cache_dir'] = str(self.feature_cache.directory)
        return counts

    def training_stats(self, clip_ids: list) -> FeatureStats:
        stats = self.feature_cache.load_stats()
        if stats is not None:
            return stats
        logger.info('No stored feature statistics; computing them from the training clips')
        return FeatureStats.from_rasters(self.cached_frames('train', clip_ids))


    def assembler(self, spec: ModelSpec, stats: Optional[FeatureStats], pitch_source: str,
                  salience_dir: Optional[str], cache_features: bool = True) -> InputAssembler:
        return InputAssembler(spec, self.feature_cache, stats, pitch_source=pitch_source,
                              salience_dir=salience_dir, cache_features=cache_features)

    # training

    def train(self, run_name: Optional[str] = None, resume_from=None, device: Optional[str] = None) -> tuple:
        """
        Train the configured variant on the training split.

        Returns:
            (TrainingRun, TrainResult)

        Raises:
            MissingInputsError: If nothing was ingested
            TrainingDivergedError: If the loss diverges; the run is marked diverged
        """
        cfg = self.config
        spec = cfg.model.spec()
        clip_ids = self.clip_ids('train')
        if not clip_ids:
            raise MissingInputsError('No training clips registered; run ingest first')
        if cfg.train.max_train_clips:
            clip_ids = clip_ids[:cfg.train.max_train_clips]
        train_ids, val_ids = split_validation(clip_ids, cfg.train.validation_fraction)
        logger.info(f"{len(train_ids)} training clips, {len(val_ids)} validation clips")

        stats = self.training_stats(train_ids) if cfg.normalize else None
        assembler = self.assembler(spec, stats, cfg.pitch.source, cfg.pitch.salience_dir)
        train_set = SegmentDataset(self.segment_sources('train', train_ids), assembler, store=self.store)
        val_set = None
        if val_ids:
            val_set = SegmentDataset(self.segment_sources('train', val_ids), assembler, store=self.store)

        loss_config = cfg.loss
        if not loss_config.resolved:
            loss_config = compute_class_weights(train_set.label_rolls(), cfg.loss.weight_cap, self.names)

        seed_everything(cfg.train.seed)
        model = build_model(spec)

        run_name = run_name or default_run_name(spec, cfg.pitch.source, cfg.train.seed)
        output_dir = Path(cfg.paths.output_dir) / run_name
        run = self.run_service.start_run({
            'run_name': run_name,
            'variant': spec.variant,
            'hsf_order': spec.hsf_order,
            'pitch_source': cfg.pitch.source if spec.uses_pitch else None,
            'config': cfg.to_dict(),
            'geometry_hash': self.geometry_hash,
        })

        extra = {
            'geometry_hash': self.geometry_hash,
            'feature_stats': stats.to_dict() if stats is not None else None,
            'pipeline_config': cfg.to_dict(),
            'instruments': self.names,
            'pitch_source': cfg.pitch.source,
            'train_clip_ids': train_ids,
            'val_clip_ids': val_ids,
            'provenance': self.provenance(self._clip_hashes(clip_ids)),
        }
        trainer = Trainer(model, cfg.train, loss_config, output_dir, checkpoint_extra=extra, device=device)
        try:
            result = trainer.fit(train_set, val_set, resume_from=resume_from)
        except TrainingDivergedError:
            self.run_service.mark_diverged(run)
            raise

        self.run_service.complete_run(run, result.best_checkpoint, result.best_epoch, result.best_val_macro_f1)
        return run, result

    # thresholds, evaluation, prediction

    def load_trained(self, checkpoint_path) -> tuple:
        """
        Returns:
            (model, checkpoint dict, FeatureStats or None)

        Raises:
            GeometryMismatchError: If the checkpoint was built for other features
        """
        checkpoint_path = Path(checkpoint_path)
        if not checkpoint_path.exists():
            raise MissingInputsError(f"Checkpoint not found: {checkpoint_path}", {'path': str(checkpoint_path)})
        checkpoint = load_checkpoint(checkpoint_path, self.geometry_hash)
        model = model_from_checkpoint(checkpoint)
        stats = checkpoint.get('feature_stats')
        return model, checkpoint, FeatureStats.from_dict(stats) if stats else None

    def results_dir(self, checkpoint_path, pitch_source: str, output_dir=None) -> Path:
        return Path(output_dir) if output_dir else Path(checkpoint_path).parent / pitch_source

    def _predict_split(self, trained: tuple, split: str, clip_ids: list, pitch_source: str,
                       salience_dir: Optional[str], batch_size: Optional[int]) -> tuple:
        model, _, stats = trained
        salience_dir = salience_dir or self.config.pitch.salience_dir
        assembler = self.assembler(model.spec, stats, pitch_source, salience_dir)
        dataset = SegmentDataset(self.segment_sources(split, clip_ids), assembler, store=self.store)
        return predict_clips(model, dataset, batch_size or self.config.train.batch_size)

    def tune(self, checkpoint_path, pitch_source: Optional[str] = None, salience_dir: Optional[str] = None,
             batch_size: Optional[int] = None, output_dir=None) -> tuple:
        """
        Tune per-instrument thresholds on the clips the checkpoint was trained on.

        Returns:
            (ThresholdVector, thresholds path)
        """
        trained = self.load_trained(checkpoint_path)
        model, checkpoint, _ = trained
        pitch_source = pitch_source or checkpoint['pitch_source']
        clip_ids = checkpoint.get('train_clip_ids') or self.clip_ids('train')
        rolls, labels = self._predict_split(trained, 'train', clip_ids, pitch_source, salience_dir, batch_size)

        out_dir = self.results_dir(checkpoint_path, pitch_source, output_dir)
        provenance = self.provenance({'checkpoint': file_hash(checkpoint_path), **self._clip_hashes(clip_ids)})
        bundle = PredictionBundle.from_clips(rolls, labels, method=method_label(model.spec, pitch_source),
                                             provenance=provenance)
        thresholds = tune_thresholds(bundle.probabilities, bundle.labels)
        bundle.thresholds = thresholds.as_array()
        bundle.save(out_dir / TRAIN_BUNDLE)
        path = thresholds.save(out_dir / THRESHOLDS_FILE, names=self.names, provenance=provenance)
        logger.info(f"Thresholds {dict(zip(self.names, thresholds.values))} written to {path}")
        return thresholds, path

    def evaluate(self, checkpoint_path, thresholds_path=None, pitch_source: Optional[str] = None,
                 salience_dir: Optional[str] = None, split: str = 'test', method: Optional[str] = None,
                 batch_size: Optional[int] = None, output_dir=None) -> tuple:
        """
        Frame-level F1 of a checkpoint on a split.

        Thresholds come from a supplied file, or are tuned on the training
        predictions written by tune().

        Returns:
            (EvalReport, report path)

        Raises:
            MissingThresholdsError: If neither thresholds nor training predictions exist
        """
        clip_ids = self.clip_ids(split)
        if not clip_ids:
            raise MissingInputsError(f"No {split} clips registered; run ingest first", {'split': split})

        trained = self.load_trained(checkpoint_path)
        model, checkpoint, _ = trained
        pitch_source = pitch_source or checkpoint['pitch_source']
        out_dir = self.results_dir(checkpoint_path, pitch_source, output_dir)
        train_bundle = out_dir / TRAIN_BUNDLE

        inputs = {'checkpoint': file_hash(checkpoint_path)}
        if thresholds_path:
            thresholds = ThresholdVector.load(thresholds_path)
            inputs['thresholds'] = file_hash(thresholds_path)
        elif train_bundle.exists():
            previous = PredictionBundle.load(train_bundle)
            thresholds = tune_thresholds(previous.probabilities, previous.labels)
            inputs['train_predictions'] = content_hash(previous.probabilities.tolist())
        else:
            raise MissingThresholdsError(
                f"No thresholds file given and no training predictions at {train_bundle}; "
                f"run `manage.py tune_thresholds --checkpoint {checkpoint_path}` first",
                {'checkpoint': str(checkpoint_path), 'expected': str(train_bundle)},
            )

        rolls, labels = self._predict_split(trained, split, clip_ids, pitch_source, salience_dir, batch_size)
        label = method or method_label(model.spec, pitch_source)
        provenance = self.provenance({**inputs, **self._clip_hashes(clip_ids)})
        bundle = PredictionBundle.from_clips(rolls, labels, thresholds=thresholds.as_array(), method=label,
                                             provenance=provenance)
        offsets = {clip_id: bundle.clip_slice(clip_id) for clip_id in bundle.clip_ids}
        report = frame_f1(bundle.probabilities, bundle.labels, thresholds, self.names,
                          clip_offsets=offsets, method=label, provenance=provenance)

        bundle.save(out_dir / TEST_BUNDLE)
        report_path = report.save(out_dir / REPORT_FILE)
        (out_dir / REPORT_TABLE).write_text(report.format_table() + '\n')

        self.run_service.record_evaluation({
            'method': label,
            'checkpoint_path': str(checkpoint_path),
            'report_path': str(report_path),
            'macro_f1': report.macro_f1,
            'per_instrument': report.f1_by_name(),
            'thresholds': report.thresholds,
        })
        return report, report_path

    def predict(self, checkpoint_path, audio_path, salience_dir: Optional[str] = None,
                thresholds_path=None, output=None, batch_size: Optional[int] = None) -> tuple:
        """
        Instrument roll of an arbitrary audio file.

        Pitch-aware variants read estimated salience files named
        ``<audio stem>_<segment:04d>.sal``.

        Returns:
            (output path, (T, 7) probabilities)

        Raises:
            MissingSalienceError: If a pitch-aware checkpoint gets no salience directory
        """
        model, checkpoint, stats = self.load_trained(checkpoint_path)
        spec = model.spec
        salience_dir = salience_dir or self.config.pitch.salience_dir
        if spec.uses_pitch and not salience_dir:
            raise MissingSalienceError(
                f"{spec.label} combines the CQT with pitch salience; ground truth pitch does not exist for "
                f"arbitrary audio, so pass --salience-dir with estimated .sal files for {Path(audio_path).stem}",
                {'variant': spec.variant},
            )

        assembler = self.assembler(spec, stats, PITCH_ESTIMATED, salience_dir, cache_features=False)
        probabilities = predict_file(model, audio_path, assembler, self.catalog,
                                     batch_size=batch_size or self.config.train.batch_size)

        if not thresholds_path:
            candidate = self.results_dir(checkpoint_path, checkpoint['pitch_source']) / THRESHOLDS_FILE
            thresholds_path = candidate if candidate.exists() else None
        thresholds = ThresholdVector.load(thresholds_path).as_array() if thresholds_path else None

        inputs = {'checkpoint': file_hash(checkpoint_path), 'audio': file_hash(audio_path)}
        if thresholds_path:
            inputs['thresholds'] = file_hash(thresholds_path)
        output = Path(output) if output else Path(self.config.paths.output_dir) / 'predictions' / f"{Path(audio_path).stem}.npz"
        path = save_prediction_roll(output, probabilities, self.names, thresholds=thresholds,
                                    provenance=self.provenance(inputs))
        return path, probabilities


def load_reports(paths: list) -> list:
    return [EvalReport.load(path) for path in paths]

"""
On-disk segment store and prediction bundles.

Segment files are ``.npz`` containers under
``<root>/<split>/<clip_id>/<clip_id>_<segment_index:04d>.npz`` holding:

    format_version   int, currently 1
    clip_id          str
    segment_index    int
    n_valid_samples  int, samples before zero padding
    audio            float32 (132300,)
    label_roll       uint8 (258, 7)
    pitch_roll       uint8 (258, 88)
    provenance       str, JSON provenance record
"""
import json
import logging
import shutil
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import ConfigError, ShapeMismatchError
from .geometry import AXIS_INSTRUMENT, AXIS_PITCH, N_INSTRUMENTS, FrameRaster
from .ingest import SegmentRecord
from .provenance import FORMAT_VERSION, canonical_json

logger = logging.getLogger(__name__)


class SegmentStore:
    """Reads and writes segment records below one root directory"""

    def __init__(self, root):
        self.root = Path(root)

    def clip_dir(self, split: str, clip_id: str) -> Path:
        return self.root / split / clip_id

    def segment_path(self, split: str, clip_id: str, segment_index: int) -> Path:
        return self.clip_dir(split, clip_id) / f"{clip_id}_{segment_index:04d}.npz"

    def has_clip(self, split: str, clip_id: str, n_segments: int) -> bool:
        return all(self.segment_path(split, clip_id, i).exists() for i in range(n_segments))

    def clear_clip(self, split: str, clip_id: str) -> None:
        directory = self.clip_dir(split, clip_id)
        if directory.exists():
            shutil.rmtree(directory)

    def write_segment(self, record: SegmentRecord, split: str, provenance: dict) -> Path:
        """
        Write one segment record.

        Args:
            record: Segment to store
            split: train or test
            provenance: Provenance record to embed

        Returns:
            Path of the written file
        """
        path = self.segment_path(split, record.clip_id, record.segment_index)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            path,
            format_version=np.int64(FORMAT_VERSION),
            clip_id=np.array(record.clip_id),
            segment_index=np.int64(record.segment_index),
            n_valid_samples=np.int64(record.n_valid_samples),
            audio=record.audio.astype(np.float32),
            label_roll=record.label_roll.data.astype(np.uint8),
            pitch_roll=record.pitch_roll.data.astype(np.uint8),
            provenance=np.array(canonical_json(provenance)),
        )
        return path

    def read_segment(self, path) -> SegmentRecord:
        """
        Load one segment file.

        Raises:
            ConfigError: If the file was written by an unsupported format version
        """
        with np.load(path, allow_pickle=False) as data:
            version = int(data['format_version'])
            if version != FORMAT_VERSION:
                raise ConfigError(
                    f"{path} has store format {version}, expected {FORMAT_VERSION}",
                    {'path': str(path), 'format_version': version},
                )
            return SegmentRecord(
                clip_id=str(data['clip_id']),
                segment_index=int(data['segment_index']),
                audio=data['audio'],
                label_roll=FrameRaster(data['label_roll'], f_axis=AXIS_INSTRUMENT),
                pitch_roll=FrameRaster(data['pitch_roll'], f_axis=AXIS_PITCH),
                n_valid_samples=int(data['n_valid_samples']),
            )

    def read_provenance(self, path) -> dict:
        with np.load(path, allow_pickle=False) as data:
            return json.loads(str(data['provenance']))

    def clip_segments(self, split: str, clip_id: str) -> list:
        """Segment files of one clip in segment order."""
        return sorted(self.clip_dir(split, clip_id).glob(f"{clip_id}_*.npz"))


class PredictionBundle:
    """
    Continuous predictions and labels for a set of clips, concatenated along time.

    Stored as ``.npz`` with clip_ids, offsets (start row of each clip, plus the
    total length), probabilities (N, 7), labels (N, 7), thresholds (7,) or empty,
    method (str) and provenance (JSON str).
    """

    def __init__(self, clip_ids: list, offsets: np.ndarray, probabilities: np.ndarray,
                 labels: np.ndarray, thresholds: Optional[np.ndarray] = None,
                 method: str = '', provenance: Optional[dict] = None):
        if probabilities.shape != labels.shape or probabilities.shape[1:] != (N_INSTRUMENTS,):
            raise ShapeMismatchError(
                f"Predictions {probabilities.shape} and labels {labels.shape} must both be (N, {N_INSTRUMENTS})",
                {'predictions': list(probabilities.shape), 'labels': list(labels.shape)},
            )
        if len(offsets) != len(clip_ids) + 1 or offsets[-1] != probabilities.shape[0]:
            raise ShapeMismatchError('Clip offsets do not cover the prediction rows')
        self.clip_ids = list(clip_ids)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.probabilities = probabilities
        self.labels = labels
        self.thresholds = thresholds
        self.method = method
        self.provenance = provenance or {}

    @classmethod
    def from_clips(cls, rolls: dict, labels: dict, **kwargs) -> 'PredictionBundle':
        """
        Build a bundle from per-clip arrays.

        Args:
            rolls: clip_id -> (T_clip, 7) probabilities, in output order
            labels: clip_id -> (T_clip, 7) binary labels
        """
        clip_ids = list(rolls)
        lengths = [rolls[clip_id].shape[0] for clip_id in clip_ids]
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        empty = np.zeros((0, N_INSTRUMENTS))
        probabilities = np.concatenate([rolls[c] for c in clip_ids]) if clip_ids else empty
        label_rows = np.concatenate([labels[c] for c in clip_ids]) if clip_ids else empty
        return cls(clip_ids, offsets, probabilities, label_rows, **kwargs)

    def clip_slice(self, clip_id: str) -> slice:
        index = self.clip_ids.index(clip_id)
        return slice(int(self.offsets[index]), int(self.offsets[index + 1]))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        thresholds = np.zeros(0) if self.thresholds is None else np.asarray(self.thresholds, dtype=np.float64)
        np.savez_compressed(
            path,
            format_version=np.int64(FORMAT_VERSION),
            clip_ids=np.array(self.clip_ids, dtype=str),
            offsets=self.offsets,
            probabilities=self.probabilities.astype(np.float32),
            labels=self.labels.astype(np.uint8),
            thresholds=thresholds,
            method=np.array(self.method),
            provenance=np.array(canonical_json(self.provenance)),
        )
        return path

    @classmethod
    def load(cls, path) -> 'PredictionBundle':
        with np.load(path, allow_pickle=False) as data:
            thresholds = data['thresholds']
            return cls(
                clip_ids=[str(c) for c in data['clip_ids']],
                offsets=data['offsets'],
                probabilities=data['probabilities'],
                labels=data['labels'],
                thresholds=thresholds if thresholds.size else None,
                method=str(data['method']),
                provenance=json.loads(str(data['provenance'])),
            )

"""
Network inputs for stored segments: CQT, normalization and the pitch component
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch.utils.data import Dataset

from ..exceptions import MissingSalienceError
from .config import PITCH_GROUND_TRUTH
from .features import FeatureCache, FeatureStats, normalize_features
from .geometry import N_FRAMES, N_PITCH_BINS
from .ingest import SegmentRecord
from .nets import CQT_HSF, ModelSpec, assemble_input
from .pitch import PitchSalience, build_hsf, find_salience, load_external_salience, salience_from_roll, salience_path

logger = logging.getLogger(__name__)


class InputAssembler:
    """
    Turns a SegmentRecord into the input tensor of one model variant.

    Args:
        spec: Model spec
        feature_cache: CQT cache
        stats: Normalization statistics, or None for raw CQT
        pitch_source: ground_truth (segment pitch roll) or estimated (.sal files)
        salience_dir: Directory of .sal files for the estimated source
        cache_features: Keep CQTs in the feature cache
    """

    def __init__(self, spec: ModelSpec, feature_cache: FeatureCache, stats: Optional[FeatureStats] = None,
                 pitch_source: str = PITCH_GROUND_TRUTH, salience_dir: Optional[str] = None,
                 cache_features: bool = True):
        self.spec = spec
        self.feature_cache = feature_cache
        self.stats = stats
        self.pitch_source = pitch_source
        self.salience_dir = salience_dir
        self.cache_features = cache_features

    def salience(self, record: SegmentRecord) -> Optional[PitchSalience]:
        """
        Pitch salience of a segment, or None for variants without a pitch input.

        Raises:
            MissingSalienceError: If the estimated source has no file for the segment
        """
        if not self.spec.uses_pitch:
            return None
        if self.pitch_source == PITCH_GROUND_TRUTH:
            return salience_from_roll(record.pitch_roll)

        path = find_salience(self.salience_dir, record.clip_id, record.segment_index)
        if path is None:
            expected = salience_path(self.salience_dir or '<salience_dir>', record.clip_id, record.segment_index)
            raise MissingSalienceError(
                f"{self.spec.label} needs a pitch salience for {record.clip_id} segment "
                f"{record.segment_index}; ground truth pitch is unavailable for this input, so supply an "
                f"estimated salience file at {expected}",
                {'variant': self.spec.variant, 'expected_path': str(expected)},
            )
        return load_external_salience(path, (N_FRAMES, N_PITCH_BINS))

    def assemble(self, record: SegmentRecord) -> np.ndarray:
        cqt = self.feature_cache.get(record, persist=self.cache_features)
        if self.stats is not None:
            cqt = normalize_features(cqt, self.stats)
        salience = self.salience(record)
        hsf = build_hsf(salience, self.spec.hsf_order) if self.spec.variant == CQT_HSF else None
        return assemble_input(self.spec, cqt, salience=salience, hsf=hsf)


class SegmentDataset(Dataset):
    """
    Segments as (input, label roll, valid frame count) triples.

    Sources are SegmentRecords or paths to stored segment files; paths are
    read on access through the store.
    """

    def __init__(self, sources: list, assembler: InputAssembler, store=None):
        self.sources = list(sources)
        self.assembler = assembler
        self.store = store

    def __len__(self) -> int:
        return len(self.sources)

    def record(self, index: int) -> SegmentRecord:
        source = self.sources[index]
        if isinstance(source, SegmentRecord):
            return source
        return self.store.read_segment(Path(source))

    def keys(self) -> list:
        """(clip_id, segment_index) per item, in dataset order."""
        keys = []
        for source in self.sources:
            if isinstance(source, SegmentRecord):
                keys.append((source.clip_id, source.segment_index))
            else:
                clip_id, _, index = Path(source).stem.rpartition('_')
                keys.append((clip_id, int(index)))
        return keys

    def __getitem__(self, index: int) -> tuple:
        record = self.record(index)
        inputs = torch.from_numpy(self.assembler.assemble(record))
        labels = torch.from_numpy(record.label_roll.data.astype(np.float32))
        return inputs, labels, record.n_valid_frames

    def label_rolls(self):
        """Unpadded label rolls of every segment; the input of compute_class_weights."""
        for index in range(len(self)):
            record = self.record(index)
            yield record.label_roll.data[:record.n_valid_frames]


def split_validation(clip_ids: list, fraction: float) -> tuple:
    """
    Hold out the last fraction of clips (in manifest order) for model selection.

    Returns:
        (training clip ids, validation clip ids)
    """
    n_val = int(round(len(clip_ids) * fraction))
    if fraction > 0 and n_val == 0 and len(clip_ids) > 1:
        n_val = 1
    if n_val >= len(clip_ids):
        n_val = 0
    cut = len(clip_ids) - n_val
    return list(clip_ids[:cut]), list(clip_ids[cut:])


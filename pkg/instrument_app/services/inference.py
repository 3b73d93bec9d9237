"""
Segment-wise inference over stored clips and arbitrary audio files
"""
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from .catalog import InstrumentCatalog
from .datasets import InputAssembler, SegmentDataset
from .geometry import HOP, SAMPLE_RATE, whole_file_frames
from .ingest import load_audio, segment_clip
from .nets import forward_batch
from .provenance import FORMAT_VERSION, canonical_json

logger = logging.getLogger(__name__)


def predict_clips(model: torch.nn.Module, dataset: SegmentDataset, batch_size: int = 16) -> tuple:
    """
    Probabilities for every segment of a dataset, regrouped by clip.

    Padded frames at the end of each clip are dropped.

    Returns:
        (clip_id -> (T_clip, 7) probabilities, clip_id -> (T_clip, 7) labels),
        clips in dataset order
    """
    keys = dataset.keys()
    pieces = defaultdict(list)
    position = 0
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    for inputs, targets, n_valid in tqdm(loader, desc='predict', unit='batch', leave=False):
        outputs = forward_batch(model, inputs)
        for output, target, valid in zip(outputs, targets.numpy(), n_valid.tolist()):
            clip_id, segment_index = keys[position]
            pieces[clip_id].append((segment_index, output[:valid], target[:valid].astype(np.uint8)))
            position += 1

    rolls, labels = {}, {}
    for clip_id, segments in pieces.items():
        segments.sort(key=lambda item: item[0])
        rolls[clip_id] = np.concatenate([output for _, output, _ in segments])
        labels[clip_id] = np.concatenate([target for _, _, target in segments])
    return rolls, labels


def predict_audio(model: torch.nn.Module, audio: np.ndarray, assembler: InputAssembler,
                  catalog: InstrumentCatalog, clip_id: str = 'input', batch_size: int = 16) -> np.ndarray:
    """
    Instrument roll of a whole recording.

    Args:
        model: Trained network
        audio: Mono samples at 44.1 kHz
        assembler: Input assembler of the model's variant
        catalog: Instrument catalog
        clip_id: Name used to look up salience files

    Returns:
        (ceil(len(audio) / 512), 7) probabilities on the hop grid of the whole file
    """
    records = segment_clip(audio, [], catalog, clip_id=clip_id)
    dataset = SegmentDataset(records, assembler)
    outputs = []
    for inputs, _, _ in DataLoader(dataset, batch_size=batch_size, shuffle=False):
        outputs.extend(forward_batch(model, inputs))
    segments, local = whole_file_frames(len(audio))
    return np.stack(outputs)[segments, local]


def predict_file(model: torch.nn.Module, audio_path, assembler: InputAssembler,
                 catalog: InstrumentCatalog, batch_size: int = 16) -> np.ndarray:
    """
    Instrument roll of an audio file; salience files are looked up by the file stem.

    Raises:
        AudioDecodeError: If the file is not decodable audio
        MissingSalienceError: For pitch-aware variants without salience files
    """
    audio_path = Path(audio_path)
    audio = load_audio(audio_path)
    logger.info(f"Predicting {audio_path.name}: {len(audio) / SAMPLE_RATE:.1f} s")
    return predict_audio(model, audio, assembler, catalog, clip_id=audio_path.stem, batch_size=batch_size)


def save_prediction_roll(path, probabilities: np.ndarray, names: list,
                         thresholds: Optional[np.ndarray] = None, provenance: Optional[dict] = None) -> Path:
    """
    Write a prediction roll as ``.npz``: probabilities (T, 7), active (T, 7)
    binarized by thresholds (empty without them), frame_times in seconds,
    instruments, thresholds and provenance.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame_times = np.arange(probabilities.shape[0]) * HOP / SAMPLE_RATE
    if thresholds is None:
        active = np.zeros((0, probabilities.shape[1]), dtype=np.uint8)
        thresholds = np.zeros(0)
    else:
        thresholds = np.asarray(thresholds, dtype=np.float64)
        active = (probabilities >= thresholds).astype(np.uint8)
    np.savez_compressed(
        path,
        format_version=np.int64(FORMAT_VERSION),
        probabilities=probabilities.astype(np.float32),
        active=active,
        frame_times=frame_times,
        instruments=np.array(names, dtype=str),
        thresholds=thresholds,
        provenance=np.array(canonical_json(provenance or {})),
    )
    return path


def load_prediction_roll(path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        return {
            'probabilities': data['probabilities'],
            'active': data['active'],
            'frame_times': data['frame_times'],
            'instruments': [str(name) for name in data['instruments']],
            'thresholds': data['thresholds'],
            'provenance': json.loads(str(data['provenance'])),
        }

"""
Synthetic recordings and label tables for tests
"""
import copy
from pathlib import Path
from typing import Optional

import numpy as np
import soundfile as sf
from django.conf import settings

from ..services.config import PipelineConfig, merge_dicts
from ..services.geometry import SAMPLE_RATE
from ..services.ingest import NoteEvent, SPLIT_LAYOUT

LABEL_HEADER = 'start_time,end_time,instrument,note,start_beat,end_beat,note_value'

PIANO, VIOLIN, CELLO, HORN = 1, 41, 43, 61


def midi_to_hz(midi_pitch: int) -> float:
    return 440.0 * 2 ** ((midi_pitch - 69) / 12)


def render_notes(seconds: float, notes: list, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Sum of sines, one per (onset_s, offset_s, code, midi) note."""
    n_samples = int(round(seconds * sample_rate))
    audio = np.zeros(n_samples, dtype=np.float32)
    t = np.arange(n_samples) / sample_rate
    for onset, offset, _, midi_pitch in notes:
        start, stop = int(onset * sample_rate), min(int(offset * sample_rate), n_samples)
        audio[start:stop] += 0.2 * np.sin(2 * np.pi * midi_to_hz(midi_pitch) * t[start:stop]).astype(np.float32)
    return audio


def write_labels(path, notes: list, sample_rate: int = SAMPLE_RATE) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [LABEL_HEADER]
    for onset, offset, code, midi_pitch in notes:
        lines.append(f"{int(onset * sample_rate)},{int(offset * sample_rate)},{code},{midi_pitch},0.0,1.0,Quarter")
    path.write_text('\n'.join(lines) + '\n')
    return path


def write_clip(root, split: str, clip_id: str, seconds: float, notes: list) -> tuple:
    audio_dir, labels_dir = SPLIT_LAYOUT[split]
    audio_path = Path(root) / audio_dir / f"{clip_id}.wav"
    audio_path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(audio_path, render_notes(seconds, notes), SAMPLE_RATE)
    labels_path = write_labels(Path(root) / labels_dir / f"{clip_id}.csv", notes)
    return audio_path, labels_path


def make_dataset(root) -> dict:
    """
    Four small clips: three for training, one for testing.

    Returns:
        clip_id -> split
    """
    clips = {
        '1001': ('train', 4.0, [(0.0, 2.0, PIANO, 60), (1.0, 4.0, VIOLIN, 76)]),
        '1002': ('train', 3.5, [(0.5, 3.0, CELLO, 48), (0.0, 1.5, PIANO, 64)]),
        '1003': ('train', 4.0, [(0.0, 4.0, HORN, 53), (2.0, 3.5, VIOLIN, 81)]),
        '2001': ('test', 4.0, [(0.0, 2.5, PIANO, 67), (1.0, 4.0, CELLO, 43)]),
    }
    for clip_id, (split, seconds, notes) in clips.items():
        write_clip(root, split, clip_id, seconds, notes)
    return {clip_id: split for clip_id, (split, _, _) in clips.items()}


def pipeline_config(tmp_dir, **sections) -> PipelineConfig:
    """Settings defaults pointed at a temporary directory, with section overrides."""
    tmp_dir = Path(tmp_dir)
    data = merge_dicts(copy.deepcopy(settings.INSTREC_PIPELINE), {
        'paths': {
            'dataset_root': str(tmp_dir / 'dataset'),
            'cache_dir': str(tmp_dir / 'cache'),
            'output_dir': str(tmp_dir / 'runs'),
        },
    })
    return PipelineConfig.from_dict(merge_dicts(data, sections))


def random_events(rng: np.random.Generator, n_events: int, codes: list, span: int,
                  labeled_codes: Optional[set] = None) -> list:
    events = []
    for _ in range(n_events):
        code = int(rng.choice(codes))
        onset = int(rng.integers(0, span))
        offset = onset + int(rng.integers(1, span // 2))
        events.append(NoteEvent(
            onset_sample=onset,
            offset_sample=offset,
            midi_pitch=int(rng.integers(15, 115)),
            instrument_code=code,
            labeled=labeled_codes is None or code in labeled_codes,
        ))
    return events

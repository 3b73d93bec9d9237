"""
Shared time/frequency grid of every raster in the pipeline
"""
from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeMismatchError

SAMPLE_RATE = 44100
HOP = 512
SEGMENT_SECONDS = 3
SEGMENT_SAMPLES = SAMPLE_RATE * SEGMENT_SECONDS  # 132300
N_FRAMES = SEGMENT_SAMPLES // HOP  # 258
N_PITCH_BINS = 88
MIDI_LOW = 21  # A0, bin 0
MIDI_HIGH = MIDI_LOW + N_PITCH_BINS - 1  # C8, bin 87
N_INSTRUMENTS = 7

AXIS_PITCH = 'pitch'
AXIS_INSTRUMENT = 'instrument'


def frame_center(t: int) -> int:
    """Sample index at the center of frame t."""
    return t * HOP + HOP // 2


def whole_file_frames(n_samples: int) -> tuple:
    """
    Map the frame grid of a whole recording onto its 3-second segments.

    Frame j of the recording is read from the segment frame whose span
    contains the sample at the center of j.

    Returns:
        (segment index, local frame index) arrays of length ceil(n_samples / HOP)
    """
    n_segments = max(-(-n_samples // SEGMENT_SAMPLES), 1)
    centers = np.arange(-(-n_samples // HOP), dtype=np.int64) * HOP + HOP // 2
    segments = np.minimum(centers // SEGMENT_SAMPLES, n_segments - 1)
    local = np.minimum((centers - segments * SEGMENT_SAMPLES) // HOP, N_FRAMES - 1)
    return segments, local


def active_frame_range(onset_sample: int, offset_sample: int, n_frames: int = N_FRAMES) -> tuple:
    """
    Frames whose center sample lies in [onset_sample, offset_sample).

    Args:
        onset_sample: First sample of the note, relative to the segment start
        offset_sample: Exclusive end sample of the note

    Returns:
        (first, stop) frame indices, stop exclusive; first >= stop means no frame
    """
    half = HOP // 2
    # ceil((onset - half) / HOP) and ceil((offset - half) / HOP) in integers
    first = -((half - onset_sample) // HOP)
    stop = -((half - offset_sample) // HOP)
    return max(first, 0), min(stop, n_frames)


def fit_frames(data: np.ndarray, n_frames: int = N_FRAMES) -> np.ndarray:
    """Truncate trailing frames or zero-pad so the time axis has n_frames rows."""
    if data.shape[0] >= n_frames:
        return data[:n_frames]
    pad = np.zeros((n_frames - data.shape[0],) + data.shape[1:], dtype=data.dtype)
    return np.concatenate([data, pad], axis=0)


@dataclass(frozen=True)
class FrameRaster:
    """
    A T x F matrix on the frame grid.

    The time axis is frames at HOP / SAMPLE_RATE seconds; the second axis holds
    semitone bins (AXIS_PITCH) or instrument indices (AXIS_INSTRUMENT).
    """
    data: np.ndarray
    f_axis: str = AXIS_PITCH

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ShapeMismatchError(
                f"FrameRaster must be 2-D, got shape {self.data.shape}",
                {'actual': list(self.data.shape)},
            )
        if self.f_axis == AXIS_INSTRUMENT and self.data.shape[1] != N_INSTRUMENTS:
            raise ShapeMismatchError(
                f"Instrument raster needs {N_INSTRUMENTS} columns, got {self.data.shape[1]}",
                {'expected': N_INSTRUMENTS, 'actual': self.data.shape[1]},
            )
        if not np.all(np.isfinite(self.data)):
            raise ShapeMismatchError('FrameRaster entries must be finite')

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

"""
Pitch salience, harmonic maps and harmonic series features (HSF).

HSF-n is the element-wise sum of the pitch salience and its copies shifted up to
the positions of harmonics 2..n+1 on the semitone axis.

External salience files (``.sal``) use this byte layout:

    bytes 0-3    magic b'SAL1'
    bytes 4-7    header length L, uint32 little-endian
    bytes 8-8+L  UTF-8 JSON header: clip_id, segment_index, shape [T, F],
                 value_range [lo, hi], dtype "float32"
    rest         T*F float32 little-endian values, row-major (frame by frame)
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import InvalidHarmonicError, ShapeMismatchError
from .geometry import AXIS_PITCH, N_FRAMES, N_PITCH_BINS, FrameRaster

logger = logging.getLogger(__name__)

SOURCE_GROUND_TRUTH = 'ground_truth'
SOURCE_EXTERNAL = 'external_estimate'

HSF_ORDERS = range(1, 6)
BINS_PER_OCTAVE = 12

SALIENCE_MAGIC = b'SAL1'
SALIENCE_TOLERANCE = 0.01


@dataclass(frozen=True)
class PitchSalience:
    data: FrameRaster
    source: str = SOURCE_GROUND_TRUTH

    def __post_init__(self):
        values = self.data.data
        if values.size and (values.min() < 0 or values.max() > 1):
            raise ShapeMismatchError('Pitch salience must lie in [0, 1]', {'source': self.source})


@dataclass(frozen=True)
class HarmonicMap:
    order: int
    data: FrameRaster


@dataclass(frozen=True)
class Hsf:
    n: int
    data: FrameRaster


def harmonic_shift_bins(k: int) -> int:
    """
    Semitone offset of the k-th harmonic above the fundamental.

    Args:
        k: Harmonic number, 1 for the fundamental

    Returns:
        round(12 * log2(k))

    Raises:
        InvalidHarmonicError: If k < 1
    """
    if k < 1:
        raise InvalidHarmonicError(f"Harmonic number must be >= 1, got {k}", {'k': k})
    return int(np.rint(BINS_PER_OCTAVE * np.log2(k)))


def _shift_up(values: np.ndarray, shift: int) -> np.ndarray:
    shifted = np.zeros_like(values)
    if shift < values.shape[1]:
        shifted[:, shift:] = values[:, :values.shape[1] - shift]
    return shifted


def harmonic_map(p0: PitchSalience, k: int) -> HarmonicMap:
    """
    Shift the salience up to where its k-th harmonic falls.

    Bins shifted past the top of the axis are discarded.
    """
    shift = harmonic_shift_bins(k)
    return HarmonicMap(order=k, data=FrameRaster(_shift_up(p0.data.data, shift), f_axis=AXIS_PITCH))


def build_hsf(p0: PitchSalience, n: int) -> Hsf:
    """
    Harmonic series feature HSF-n: sum of harmonic maps for harmonics 1..n+1.

    Args:
        p0: Pitch salience
        n: Order, 1..5

    Returns:
        Hsf with entries in [0, n + 1]
    """
    if n not in HSF_ORDERS:
        raise InvalidHarmonicError(f"HSF order must be in 1..5, got {n}", {'n': n})

    values = p0.data.data
    total = np.zeros_like(values)
    for k in range(1, n + 2):
        total += _shift_up(values, harmonic_shift_bins(k))
    return Hsf(n=n, data=FrameRaster(total, f_axis=AXIS_PITCH))


def salience_from_roll(pitch_roll: FrameRaster) -> PitchSalience:
    """Ground-truth salience from a binary pitch roll."""
    return PitchSalience(
        data=FrameRaster(pitch_roll.data.astype(np.float32), f_axis=AXIS_PITCH),
        source=SOURCE_GROUND_TRUTH,
    )


def save_salience(path, values: np.ndarray, clip_id: str = '', segment_index: int = 0) -> Path:
    """
    Write a salience matrix in the exchange format.

    Args:
        path: Destination file
        values: (T, F) real matrix
        clip_id: Header provenance
        segment_index: Header provenance
    """
    values = np.ascontiguousarray(values, dtype='<f4')
    header = json.dumps({
        'clip_id': clip_id,
        'segment_index': int(segment_index),
        'shape': list(values.shape),
        'value_range': [float(values.min()), float(values.max())] if values.size else [0.0, 0.0],
        'dtype': 'float32',
    }).encode('utf-8')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(SALIENCE_MAGIC)
        f.write(struct.pack('<I', len(header)))
        f.write(header)
        f.write(values.tobytes())
    return path


def read_salience_file(path) -> tuple:
    """
    Read a salience exchange file.

    Returns:
        (header dict, (T, F) float32 matrix)
    """
    raw = Path(path).read_bytes()
    if raw[:4] != SALIENCE_MAGIC:
        raise ShapeMismatchError(f"{path} is not a salience file", {'path': str(path)})
    (header_length,) = struct.unpack('<I', raw[4:8])
    header = json.loads(raw[8:8 + header_length].decode('utf-8'))
    shape = tuple(header['shape'])
    body = raw[8 + header_length:]
    expected_bytes = int(np.prod(shape)) * 4
    if len(body) != expected_bytes:
        raise ShapeMismatchError(
            f"{path} holds {len(body)} data bytes, header shape {list(shape)} needs {expected_bytes}",
            {'path': str(path), 'shape': list(shape)},
        )
    values = np.frombuffer(body, dtype='<f4').reshape(shape).astype(np.float32)
    return header, values


def load_external_salience(path, geometry: tuple = (N_FRAMES, N_PITCH_BINS)) -> PitchSalience:
    """
    Load a multi-pitch estimate produced outside this pipeline.

    Args:
        path: Salience exchange file
        geometry: Expected (frames, bins)

    Returns:
        PitchSalience clamped to [0, 1]

    Raises:
        ShapeMismatchError: Naming expected and actual shapes
    """
    header, values = read_salience_file(path)
    if values.shape != tuple(geometry):
        raise ShapeMismatchError(
            f"Salience {path} has shape {list(values.shape)}, expected {list(geometry)}",
            {'path': str(path), 'expected': list(geometry), 'actual': list(values.shape)},
        )

    low, high = float(values.min()), float(values.max())
    if low < -SALIENCE_TOLERANCE or high > 1 + SALIENCE_TOLERANCE:
        logger.warning(
            f"Salience {path} spans [{low:.3f}, {high:.3f}], outside [0, 1]; is this a salience file?"
        )

    clamped = np.clip(values, 0.0, 1.0)
    return PitchSalience(data=FrameRaster(clamped, f_axis=AXIS_PITCH), source=SOURCE_EXTERNAL)


def salience_path(salience_dir, clip_id: str, segment_index: int) -> Path:
    return Path(salience_dir) / f"{clip_id}_{segment_index:04d}.sal"


def find_salience(salience_dir: Optional[str], clip_id: str, segment_index: int) -> Optional[Path]:
    if not salience_dir:
        return None
    path = salience_path(salience_dir, clip_id, segment_index)
    return path if path.exists() else None

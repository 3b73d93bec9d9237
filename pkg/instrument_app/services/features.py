"""
Constant-Q features of 3-second segments, their cache and normalization
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import librosa
import numpy as np

from ..exceptions import ConfigError, InvalidAudioError, ShapeMismatchError
from .geometry import (
    AXIS_PITCH,
    HOP,
    N_FRAMES,
    N_PITCH_BINS,
    SAMPLE_RATE,
    SEGMENT_SAMPLES,
    FrameRaster,
    fit_frames,
)
from .provenance import short_hash

logger = logging.getLogger(__name__)

MAGNITUDE_SCALES = ('linear', 'log1p')
NORMALIZE_EPS = 1e-8
PIANO_FMIN = 27.5  # A0


@dataclass(frozen=True)
class CqtConfig:
    sample_rate: int = SAMPLE_RATE
    hop: int = HOP
    n_bins: int = N_PITCH_BINS
    bins_per_octave: int = 12
    fmin: float = PIANO_FMIN
    magnitude_scale: str = 'log1p'

    def __post_init__(self):
        if self.magnitude_scale not in MAGNITUDE_SCALES:
            raise ConfigError(
                f"magnitude_scale must be one of {MAGNITUDE_SCALES}, got {self.magnitude_scale!r}",
                {'magnitude_scale': self.magnitude_scale},
            )
        # The bins must cover the 88 piano keys starting at fmin.
        if self.n_bins * 12 < N_PITCH_BINS * self.bins_per_octave:
            raise ConfigError(
                f"{self.n_bins} bins at {self.bins_per_octave}/octave do not span the piano range",
                asdict(self),
            )
        if SEGMENT_SAMPLES // self.hop < N_FRAMES:
            raise ConfigError(f"Hop {self.hop} yields fewer than {N_FRAMES} frames per segment", asdict(self))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        return short_hash(self.to_dict())


def compute_cqt(audio: np.ndarray, cfg: Optional[CqtConfig] = None) -> FrameRaster:
    """
    Constant-Q magnitude spectrogram of one segment.

    Args:
        audio: 132300 mono samples at 44.1 kHz
        cfg: Transform parameters

    Returns:
        FrameRaster (258, n_bins), non-negative; log1p-compressed when configured

    Raises:
        InvalidAudioError: If the length is wrong or the audio holds NaN/Inf
    """
    cfg = cfg or CqtConfig()
    audio = np.asarray(audio)
    if audio.shape != (SEGMENT_SAMPLES,):
        raise InvalidAudioError(
            f"CQT input must have {SEGMENT_SAMPLES} samples, got {audio.shape}",
            {'expected': SEGMENT_SAMPLES, 'actual': list(audio.shape)},
        )
    if not np.all(np.isfinite(audio)):
        raise InvalidAudioError('Audio contains NaN or infinite samples')

    if not np.any(audio):
        return FrameRaster(np.zeros((N_FRAMES, cfg.n_bins), dtype=np.float32), f_axis=AXIS_PITCH)

    spectrum = np.abs(librosa.cqt(
        audio.astype(np.float32),
        sr=cfg.sample_rate,
        hop_length=cfg.hop,
        fmin=cfg.fmin,
        n_bins=cfg.n_bins,
        bins_per_octave=cfg.bins_per_octave,
    ))
    # librosa centers frames, giving 259 for a 3 s segment; the last one is dropped.
    magnitude = fit_frames(spectrum.T.astype(np.float32))
    if cfg.magnitude_scale == 'log1p':
        magnitude = np.log1p(magnitude)
    return FrameRaster(magnitude, f_axis=AXIS_PITCH)


@dataclass(frozen=True)
class FeatureStats:
    """Per-bin mean and standard deviation over training frames."""
    mean: np.ndarray
    std: np.ndarray

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, mean=self.mean, std=self.std)
        return path

    @classmethod
    def load(cls, path) -> 'FeatureStats':
        with np.load(path, allow_pickle=False) as data:
            return cls(mean=data['mean'], std=data['std'])

    def to_dict(self) -> dict:
        return {'mean': self.mean.tolist(), 'std': self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'FeatureStats':
        return cls(mean=np.asarray(data['mean'], dtype=np.float64), std=np.asarray(data['std'], dtype=np.float64))

    @classmethod
    def from_rasters(cls, rasters: Iterable[np.ndarray]) -> 'FeatureStats':
        """
        Accumulate mean/std over the rows of many rasters.

        Args:
            rasters: (T, F) arrays, typically training-split CQT frames
        """
        count = 0
        total = None
        total_sq = None
        for raster in rasters:
            data = np.asarray(raster, dtype=np.float64)
            if total is None:
                total = np.zeros(data.shape[1])
                total_sq = np.zeros(data.shape[1])
            count += data.shape[0]
            total += data.sum(axis=0)
            total_sq += np.square(data).sum(axis=0)
        if not count:
            raise ConfigError('Cannot compute feature statistics from zero frames')
        mean = total / count
        var = np.maximum(total_sq / count - np.square(mean), 0.0)
        return cls(mean=mean, std=np.sqrt(var))


def _check_stats(raster: FrameRaster, stats: FeatureStats) -> None:
    n_bins = raster.shape[1]
    if stats.mean.shape != (n_bins,) or stats.std.shape != (n_bins,):
        raise ShapeMismatchError(
            f"Stats of shape {stats.mean.shape}/{stats.std.shape} do not match {n_bins} bins",
            {'expected': n_bins, 'mean': list(stats.mean.shape), 'std': list(stats.std.shape)},
        )


def normalize_features(raster: FrameRaster, stats: FeatureStats) -> FrameRaster:
    """
    Standardize each bin: (x - mean) / max(std, 1e-8).

    Raises:
        ShapeMismatchError: If the stats do not have one entry per bin
    """
    _check_stats(raster, stats)
    scale = np.maximum(stats.std, NORMALIZE_EPS)
    data = (raster.data.astype(np.float64) - stats.mean) / scale
    return FrameRaster(data.astype(np.float32), f_axis=raster.f_axis)


def denormalize_features(raster: FrameRaster, stats: FeatureStats) -> FrameRaster:
    """Inverse of normalize_features."""
    _check_stats(raster, stats)
    scale = np.maximum(stats.std, NORMALIZE_EPS)
    data = raster.data.astype(np.float64) * scale + stats.mean
    return FrameRaster(data.astype(np.float32), f_axis=raster.f_axis)


class FeatureCache:
    """
    CQT rasters cached as ``<root>/<config hash>/<clip_id>_<segment_index:04d>.npy``.

    The CQT config is written next to the arrays as ``config.json``; a changed
    config hashes to a new directory, so stale caches are never read.
    """

    STATS_FILE = 'stats.npz'

    def __init__(self, root, cfg: CqtConfig):
        self.cfg = cfg
        self.directory = Path(root) / cfg.hash

    def path_for(self, clip_id: str, segment_index: int) -> Path:
        return self.directory / f"{clip_id}_{segment_index:04d}.npy"

    @property
    def stats_path(self) -> Path:
        return self.directory / self.STATS_FILE

    def _write_config(self) -> None:
        config_path = self.directory / 'config.json'
        if not config_path.exists():
            self.directory.mkdir(parents=True, exist_ok=True)
            config_path.write_text(json.dumps(self.cfg.to_dict(), indent=2, sort_keys=True))

    def get(self, record, persist: bool = True) -> FrameRaster:
        """
        CQT of a segment record, computed on a cache miss.

        Args:
            record: SegmentRecord
            persist: Read and write the cache; off for audio outside the segment store
        """
        if not persist:
            return compute_cqt(record.audio, self.cfg)

        path = self.path_for(record.clip_id, record.segment_index)
        if path.exists():
            return FrameRaster(np.load(path, allow_pickle=False), f_axis=AXIS_PITCH)

        raster = compute_cqt(record.audio, self.cfg)
        self._write_config()
        np.save(path, raster.data)
        return raster

    def has(self, clip_id: str, segment_index: int) -> bool:
        return self.path_for(clip_id, segment_index).exists()

    def save_stats(self, stats: FeatureStats) -> Path:
        self._write_config()
        return stats.save(self.stats_path)

    def load_stats(self) -> Optional[FeatureStats]:
        if not self.stats_path.exists():
            return None
        return FeatureStats.load(self.stats_path)

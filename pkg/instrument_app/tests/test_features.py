import json
import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from ..exceptions import ConfigError, InvalidAudioError, ShapeMismatchError
from ..services.catalog import load_catalog
from ..services.features import (
    CqtConfig,
    FeatureCache,
    FeatureStats,
    compute_cqt,
    denormalize_features,
    normalize_features,
)
from ..services.geometry import AXIS_PITCH, HOP, N_FRAMES, SEGMENT_SAMPLES, FrameRaster
from ..services.ingest import segment_clip
from .synthetic import render_notes


class ComputeCqtTests(SimpleTestCase):
    def test_a4_peaks_at_bin_48(self):
        # MIDI 69 sits 48 semitones above A0
        audio = render_notes(3.0, [(0.0, 3.0, 1, 69)])
        raster = compute_cqt(audio)
        self.assertEqual(raster.shape, (N_FRAMES, 88))
        middle = raster.data[50:200].mean(axis=0)
        self.assertEqual(int(np.argmax(middle)), 48)

    def test_silence_gives_zeros(self):
        raster = compute_cqt(np.zeros(SEGMENT_SAMPLES, dtype=np.float32))
        self.assertEqual(raster.shape, (N_FRAMES, 88))
        self.assertFalse(raster.data.any())

    def test_non_negative_and_finite(self):
        audio = np.random.default_rng(0).standard_normal(SEGMENT_SAMPLES).astype(np.float32) * 0.1
        raster = compute_cqt(audio, CqtConfig(magnitude_scale='linear'))
        self.assertTrue(np.all(raster.data >= 0))
        self.assertTrue(np.all(np.isfinite(raster.data)))

    def test_wrong_length(self):
        with self.assertRaises(InvalidAudioError):
            compute_cqt(np.zeros(1000, dtype=np.float32))

    def test_nan_audio(self):
        audio = np.zeros(SEGMENT_SAMPLES, dtype=np.float32)
        audio[100] = np.nan
        with self.assertRaises(InvalidAudioError):
            compute_cqt(audio)

    def test_invalid_scale(self):
        with self.assertRaises(ConfigError):
            CqtConfig(magnitude_scale='db')


class CqtPropertyTests(SimpleTestCase):
    # frames this far from a segment edge or a pad boundary see no edge effects
    MARGIN = 64

    def setUp(self):
        self.linear = CqtConfig(magnitude_scale='linear')
        self.noise = np.random.default_rng(5).standard_normal(2 * SEGMENT_SAMPLES).astype(np.float32) * 0.1

    def test_hop_shift_moves_interior_frames(self):
        k = 5
        base = compute_cqt(self.noise[:SEGMENT_SAMPLES], self.linear).data
        shifted = compute_cqt(self.noise[k * HOP:k * HOP + SEGMENT_SAMPLES], self.linear).data
        interior = slice(self.MARGIN, N_FRAMES - self.MARGIN - k)
        moved = slice(self.MARGIN + k, N_FRAMES - self.MARGIN)
        np.testing.assert_allclose(shifted[interior], base[moved], rtol=1e-3, atol=1e-3 * base.max())

    def test_amplitude_scales_linear_magnitude(self):
        audio = self.noise[:SEGMENT_SAMPLES]
        base = compute_cqt(audio, self.linear).data
        for alpha in (0.25, 3.0):
            scaled = compute_cqt(alpha * audio, self.linear).data
            np.testing.assert_allclose(scaled, alpha * base, rtol=1e-4, atol=1e-6 * alpha * base.max())

    def test_padded_frames_are_silent(self):
        # 2 s of audio: the segment is zero from sample 88200 onwards
        (record,) = segment_clip(self.noise[:88200], [], load_catalog(), clip_id='pad')
        energy = (compute_cqt(record.audio, self.linear).data.astype(np.float64) ** 2).sum(axis=1)
        first_silent = 88200 // HOP + self.MARGIN
        self.assertLess(energy[first_silent:].max(), 1e-6 * energy.max())



class NormalizationTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(4)
        self.rasters = [rng.gamma(2.0, size=(N_FRAMES, 88)).astype(np.float32) for _ in range(3)]

    def test_stats_match_numpy(self):
        stats = FeatureStats.from_rasters(self.rasters)
        stacked = np.concatenate(self.rasters).astype(np.float64)
        np.testing.assert_allclose(stats.mean, stacked.mean(axis=0), rtol=1e-10)
        np.testing.assert_allclose(stats.std, stacked.std(axis=0), rtol=1e-6)

    def test_normalized_training_frames_are_standard(self):
        stats = FeatureStats.from_rasters(self.rasters)
        normalized = np.concatenate([
            normalize_features(FrameRaster(r, f_axis=AXIS_PITCH), stats).data for r in self.rasters
        ])
        np.testing.assert_allclose(normalized.mean(axis=0), 0, atol=1e-4)
        np.testing.assert_allclose(normalized.std(axis=0), 1, atol=1e-3)

    def test_denormalize_inverts(self):
        stats = FeatureStats.from_rasters(self.rasters)
        raster = FrameRaster(self.rasters[0], f_axis=AXIS_PITCH)
        restored = denormalize_features(normalize_features(raster, stats), stats)
        np.testing.assert_allclose(restored.data, raster.data, rtol=1e-4, atol=1e-4)

    def test_constant_bin_stays_finite(self):
        rasters = [np.zeros((N_FRAMES, 88), dtype=np.float32)]
        stats = FeatureStats.from_rasters(rasters)
        normalized = normalize_features(FrameRaster(rasters[0], f_axis=AXIS_PITCH), stats)
        self.assertFalse(normalized.data.any())

    def test_stats_shape_mismatch(self):
        stats = FeatureStats(mean=np.zeros(40), std=np.ones(40))
        with self.assertRaises(ShapeMismatchError):
            normalize_features(FrameRaster(self.rasters[0], f_axis=AXIS_PITCH), stats)

    def test_no_frames(self):
        with self.assertRaises(ConfigError):
            FeatureStats.from_rasters([])


class FeatureCacheTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        audio = render_notes(3.0, [(0.0, 3.0, 1, 57)])
        (self.record,) = segment_clip(audio, [], load_catalog(), clip_id='c1')

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_miss_then_hit(self):
        cache = FeatureCache(self.tmp, CqtConfig())
        self.assertFalse(cache.has('c1', 0))
        first = cache.get(self.record)
        self.assertTrue(cache.has('c1', 0))
        np.testing.assert_array_equal(cache.get(self.record).data, first.data)
        config = json.loads((cache.directory / 'config.json').read_text())
        self.assertEqual(config['hop'], 512)

    def test_changed_config_uses_new_directory(self):
        log_cache = FeatureCache(self.tmp, CqtConfig())
        linear_cache = FeatureCache(self.tmp, CqtConfig(magnitude_scale='linear'))
        self.assertNotEqual(log_cache.directory, linear_cache.directory)
        log_cache.get(self.record)
        self.assertFalse(linear_cache.has('c1', 0))

    def test_transient_lookup_writes_nothing(self):
        cache = FeatureCache(self.tmp, CqtConfig())
        cache.get(self.record, persist=False)
        self.assertFalse(cache.has('c1', 0))

    def test_stats_round_trip(self):
        cache = FeatureCache(self.tmp, CqtConfig())
        self.assertIsNone(cache.load_stats())
        cache.save_stats(FeatureStats(mean=np.arange(88.0), std=np.ones(88)))
        np.testing.assert_array_equal(cache.load_stats().mean, np.arange(88.0))

import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from ..exceptions import InvalidHarmonicError, ShapeMismatchError
from ..services.geometry import AXIS_PITCH, N_FRAMES, N_PITCH_BINS, FrameRaster
from ..services.pitch import (
    SOURCE_EXTERNAL,
    PitchSalience,
    build_hsf,
    harmonic_map,
    harmonic_shift_bins,
    load_external_salience,
    read_salience_file,
    salience_from_roll,
    save_salience,
)


def salience(values: np.ndarray) -> PitchSalience:
    return PitchSalience(FrameRaster(values.astype(np.float32), f_axis=AXIS_PITCH))


def naive_hsf(p0: np.ndarray, n: int) -> np.ndarray:
    offsets = [int(round(12 * np.log2(k))) for k in range(1, n + 2)]
    out = np.zeros_like(p0)
    for f in range(p0.shape[1]):
        for offset in offsets:
            if f - offset >= 0:
                out[:, f] += p0[:, f - offset]
    return out


class HarmonicShiftTests(SimpleTestCase):
    def test_first_six_harmonics(self):
        self.assertEqual([harmonic_shift_bins(k) for k in range(1, 7)], [0, 12, 19, 24, 28, 31])

    def test_invalid_harmonic(self):
        with self.assertRaises(InvalidHarmonicError):
            harmonic_shift_bins(0)

    def test_shift_past_top_is_discarded(self):
        p0 = np.zeros((N_FRAMES, N_PITCH_BINS))
        p0[:, 80] = 1
        shifted = harmonic_map(salience(p0), 2)
        self.assertEqual(shifted.data.data.sum(), 0)


class BuildHsfTests(SimpleTestCase):
    def test_matches_naive_reference(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            if trial % 2:
                p0 = (rng.random((N_FRAMES, N_PITCH_BINS)) < 0.05).astype(np.float32)
            else:
                p0 = rng.random((N_FRAMES, N_PITCH_BINS)).astype(np.float32)
            for n in range(1, 6):
                hsf = build_hsf(salience(p0), n)
                np.testing.assert_array_equal(hsf.data.data, naive_hsf(p0, n))

    def test_single_note_hsf3(self):
        p0 = np.zeros((N_FRAMES, N_PITCH_BINS))
        p0[:, 10] = 1
        hsf = build_hsf(salience(p0), 3).data.data
        self.assertEqual(sorted(np.flatnonzero(hsf[0])), [10, 22, 29, 34])

    def test_range(self):
        p0 = np.ones((N_FRAMES, N_PITCH_BINS))
        for n in range(1, 6):
            values = build_hsf(salience(p0), n).data.data
            self.assertGreaterEqual(values.min(), 0)
            self.assertEqual(values.max(), n + 1)

    def test_zero_salience(self):
        hsf = build_hsf(salience(np.zeros((N_FRAMES, N_PITCH_BINS))), 5)
        self.assertFalse(hsf.data.data.any())

    def test_shift_equivariance(self):
        rng = np.random.default_rng(11)
        p0 = rng.random((N_FRAMES, N_PITCH_BINS)).astype(np.float32)
        shift = 5
        moved = np.zeros_like(p0)
        moved[:, shift:] = p0[:, :-shift]
        expected = np.zeros_like(p0)
        expected[:, shift:] = build_hsf(salience(p0), 3).data.data[:, :-shift]
        np.testing.assert_allclose(build_hsf(salience(moved), 3).data.data, expected, atol=1e-6)

    def test_order_out_of_range(self):
        p0 = salience(np.zeros((N_FRAMES, N_PITCH_BINS)))
        for n in (0, 6):
            with self.assertRaises(InvalidHarmonicError):
                build_hsf(p0, n)

    def test_linear_in_salience(self):
        rng = np.random.default_rng(13)
        p = rng.random((N_FRAMES, N_PITCH_BINS)).astype(np.float32)
        q = (rng.random((N_FRAMES, N_PITCH_BINS)) < 0.1).astype(np.float32)
        alpha, beta = 0.3, 0.6
        for n in range(1, 6):
            mixed = build_hsf(salience(alpha * p + beta * q), n).data.data
            expected = alpha * build_hsf(salience(p), n).data.data + beta * build_hsf(salience(q), n).data.data
            np.testing.assert_allclose(mixed, expected, rtol=1e-5, atol=1e-6)

    def test_support_lies_on_harmonics_of_active_cells(self):
        rng = np.random.default_rng(17)
        p0 = (rng.random((N_FRAMES, N_PITCH_BINS)) < 0.03).astype(np.float32)
        for n in range(1, 6):
            offsets = {harmonic_shift_bins(k) for k in range(1, n + 2)}
            hsf = build_hsf(salience(p0), n).data.data
            for t, f in zip(*np.nonzero(hsf)):
                fundamentals = np.flatnonzero(p0[t])
                self.assertTrue(any(f - f0 in offsets for f0 in fundamentals), (n, t, f))

    def test_frame_permutation_commutes(self):
        rng = np.random.default_rng(19)
        p0 = rng.random((N_FRAMES, N_PITCH_BINS)).astype(np.float32)
        order = rng.permutation(N_FRAMES)
        for n in range(1, 6):
            permuted = build_hsf(salience(p0[order]), n).data.data
            np.testing.assert_array_equal(permuted, build_hsf(salience(p0), n).data.data[order])


    def test_ground_truth_salience_from_roll(self):
        roll = FrameRaster(np.eye(N_FRAMES, N_PITCH_BINS, dtype=np.uint8), f_axis=AXIS_PITCH)
        p0 = salience_from_roll(roll)
        self.assertEqual(p0.data.data.dtype, np.float32)
        self.assertEqual(p0.data.data.sum(), N_PITCH_BINS)


class SalienceFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_header_and_values(self):
        values = np.random.default_rng(2).random((N_FRAMES, N_PITCH_BINS)).astype(np.float32)
        path = save_salience(self.tmp / 'a_0000.sal', values, clip_id='a', segment_index=0)
        header, loaded = read_salience_file(path)
        self.assertEqual(header['shape'], [N_FRAMES, N_PITCH_BINS])
        self.assertEqual(header['clip_id'], 'a')
        np.testing.assert_array_equal(loaded, values)
        self.assertEqual(path.read_bytes()[:4], b'SAL1')

    def test_out_of_range_values_clamped_with_warning(self):
        values = np.full((N_FRAMES, N_PITCH_BINS), 0.5, dtype=np.float32)
        values[0, 0] = 3.0
        values[1, 1] = -0.5
        path = save_salience(self.tmp / 'b.sal', values)
        with self.assertLogs('instrument_app.services.pitch', level='WARNING'):
            loaded = load_external_salience(path)
        self.assertEqual(loaded.source, SOURCE_EXTERNAL)
        self.assertEqual(loaded.data.data[0, 0], 1.0)
        self.assertEqual(loaded.data.data[1, 1], 0.0)

    def test_shape_mismatch_names_shapes(self):
        path = save_salience(self.tmp / 'c.sal', np.zeros((100, N_PITCH_BINS), dtype=np.float32))
        with self.assertRaises(ShapeMismatchError) as ctx:
            load_external_salience(path)
        self.assertEqual(ctx.exception.details['expected'], [N_FRAMES, N_PITCH_BINS])
        self.assertEqual(ctx.exception.details['actual'], [100, N_PITCH_BINS])

    def test_not_a_salience_file(self):
        path = self.tmp / 'd.sal'
        path.write_bytes(b'RIFF0000WAVE')
        with self.assertRaises(ShapeMismatchError):
            read_salience_file(path)

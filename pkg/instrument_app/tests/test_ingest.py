import inspect
import logging
import multiprocessing
import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, TestCase

from ..exceptions import EmptyAudioError, LabelParseError, MissingInputsError
from ..services.catalog import load_catalog
from ..services.features import FeatureStats
from ..services.geometry import (
    HOP,
    N_FRAMES,
    N_INSTRUMENTS,
    SEGMENT_SAMPLES,
    active_frame_range,
    frame_center,
    whole_file_frames,
)
from ..services.ingest import (
    IngestService,
    NoteEvent,
    clip_events,
    discover_clips,
    parse_labels,
    rasterize_labels,
    rasterize_pitch,
    read_split_manifest,
    segment_clip,
    unsegment,
)
from ..services.pipeline import PipelineService
from ..services.store import SegmentStore
from .synthetic import CELLO, LABEL_HEADER, PIANO, VIOLIN, make_dataset, pipeline_config, random_events, write_clip


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        super().tearDown()


class FrameGridTests(SimpleTestCase):
    def test_segment_geometry(self):
        self.assertEqual(SEGMENT_SAMPLES, 132300)
        self.assertEqual(N_FRAMES, 258)

    def test_frame_range_matches_center_rule(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            onset = int(rng.integers(-2000, SEGMENT_SAMPLES))
            offset = onset + int(rng.integers(1, 5000))
            first, stop = active_frame_range(onset, offset)
            expected = [t for t in range(N_FRAMES) if onset <= frame_center(t) < offset]
            self.assertEqual(list(range(first, stop)), expected)

    def test_note_ending_on_center_excludes_frame(self):
        # frame 1 is centered on sample 768
        self.assertEqual(active_frame_range(0, 768), (0, 1))
        self.assertEqual(active_frame_range(0, 769), (0, 2))

    def test_whole_file_frames_cover_every_hop(self):
        for seconds in (9, 60, 240):
            n_samples = seconds * 44100
            segments, local = whole_file_frames(n_samples)
            self.assertEqual(len(segments), -(-n_samples // HOP))
            self.assertTrue(np.all(np.diff(segments) >= 0))
            self.assertTrue(np.all((local >= 0) & (local < N_FRAMES)))

    def test_whole_file_frames_stay_on_time(self):
        for seconds in (9, 240):
            segments, local = whole_file_frames(seconds * 44100)
            centers = np.arange(len(segments)) * HOP + HOP // 2
            sources = segments * SEGMENT_SAMPLES + local * HOP + HOP // 2
            # the final hop of an exact multiple of 3 s is centered past the audio
            self.assertLess(int(np.abs(centers - sources)[:-1].max()), HOP)

    def test_whole_file_frames_of_one_segment(self):
        segments, local = whole_file_frames(SEGMENT_SAMPLES)
        # 259 hops, the last one read from the final segment frame
        self.assertEqual(len(segments), 259)
        self.assertEqual(set(segments.tolist()), {0})
        self.assertEqual(local[:N_FRAMES].tolist(), list(range(N_FRAMES)))
        self.assertEqual(int(local[-1]), N_FRAMES - 1)



class ParseLabelsTests(TempDirMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.catalog = load_catalog()

    def write(self, text: str) -> Path:
        path = self.tmp / 'labels.csv'
        path.write_text(text)
        return path

    def test_parses_rows_in_file_order(self):
        path = self.write(f"{LABEL_HEADER}\n100,900,1,60,0,1,Quarter\n50,400,41,72,0,1,Eighth\n")
        events = parse_labels(path, self.catalog)
        self.assertEqual(events, [
            NoteEvent(100, 900, 60, 1, labeled=True),
            NoteEvent(50, 400, 72, 41, labeled=True),
        ])

    def test_unknown_instrument_is_unlabeled(self):
        path = self.write(f"{LABEL_HEADER}\n0,1000,7,60,0,1,Quarter\n")
        (event,) = parse_labels(path, self.catalog)
        self.assertFalse(event.labeled)

    def test_empty_file(self):
        self.assertEqual(parse_labels(self.write(''), self.catalog), [])

    def test_header_only(self):
        self.assertEqual(parse_labels(self.write(LABEL_HEADER + '\n'), self.catalog), [])

    def test_malformed_row_reports_line(self):
        path = self.write(f"{LABEL_HEADER}\n0,1000,1,60,0,1,Quarter\n10,abc,1,60,0,1,Quarter\n")
        with self.assertRaises(LabelParseError) as ctx:
            parse_labels(path, self.catalog)
        self.assertEqual(ctx.exception.details['line'], 3)
        self.assertIn('line 3', str(ctx.exception))

    def test_offset_before_onset_is_malformed(self):
        path = self.write(f"{LABEL_HEADER}\n500,100,1,60,0,1,Quarter\n")
        with self.assertRaises(LabelParseError) as ctx:
            parse_labels(path, self.catalog)
        self.assertEqual(ctx.exception.details['line'], 2)

    def test_missing_column(self):
        path = self.write('start_time,end_time,note\n0,10,60\n')
        with self.assertRaises(LabelParseError) as ctx:
            parse_labels(path, self.catalog)
        self.assertEqual(ctx.exception.details['missing_columns'], ['instrument'])


class RasterizeTests(SimpleTestCase):
    def setUp(self):
        self.catalog = load_catalog()
        logging.getLogger('instrument_app').setLevel(logging.ERROR)

    def tearDown(self):
        logging.getLogger('instrument_app').setLevel(logging.INFO)

    def brute_force(self, events: list) -> tuple:
        labels = np.zeros((N_FRAMES, N_INSTRUMENTS), dtype=np.uint8)
        pitches = np.zeros((N_FRAMES, 88), dtype=np.uint8)
        for t in range(N_FRAMES):
            center = t * HOP + HOP // 2
            for event in events:
                if not event.onset_sample <= center < event.offset_sample:
                    continue
                if event.labeled and event.instrument_code in self.catalog:
                    labels[t, self.catalog.index_of(event.instrument_code)] = 1
                if 21 <= event.midi_pitch <= 108:
                    pitches[t, event.midi_pitch - 21] = 1
        return labels, pitches

    def test_random_event_sets_match_center_predicate(self):
        rng = np.random.default_rng(0)
        codes = self.catalog.codes + [7, 74]
        for _ in range(1000):
            events = random_events(rng, int(rng.integers(0, 6)), codes, SEGMENT_SAMPLES,
                                   labeled_codes=set(self.catalog.codes))
            labels, pitches = self.brute_force(events)
            np.testing.assert_array_equal(rasterize_labels(events, self.catalog).data, labels)
            np.testing.assert_array_equal(rasterize_pitch(events).data, pitches)

    def test_unlabeled_instrument_only_in_pitch_roll(self):
        events = [NoteEvent(0, SEGMENT_SAMPLES, 60, 7, labeled=False)]
        self.assertEqual(rasterize_labels(events, self.catalog).data.sum(), 0)
        self.assertEqual(rasterize_pitch(events).data[:, 60 - 21].sum(), N_FRAMES)

    def test_out_of_range_pitch_dropped(self):
        logging.getLogger('instrument_app').setLevel(logging.INFO)
        with self.assertLogs('instrument_app.services.ingest', level='WARNING'):
            roll = rasterize_pitch([NoteEvent(0, 5000, 110, 1)])
        self.assertEqual(roll.data.sum(), 0)

    def test_clip_events_makes_times_relative(self):
        events = [NoteEvent(100_000, 200_000, 60, 1)]
        clipped = clip_events(events, SEGMENT_SAMPLES, 2 * SEGMENT_SAMPLES)
        self.assertEqual(clipped, [NoteEvent(0, 200_000 - SEGMENT_SAMPLES, 60, 1)])
        self.assertEqual(clip_events(events, 2 * SEGMENT_SAMPLES, 3 * SEGMENT_SAMPLES), [])


class SegmentClipTests(SimpleTestCase):
    def setUp(self):
        self.catalog = load_catalog()

    def test_seven_seconds_gives_three_segments(self):
        audio = np.ones(7 * 44100, dtype=np.float32)
        records = segment_clip(audio, [], self.catalog, clip_id='c')
        self.assertEqual(len(records), 3)
        last = records[-1]
        self.assertEqual(last.n_valid_samples, 44100)
        self.assertTrue(np.all(last.audio[44100:] == 0))
        self.assertTrue(np.all(last.audio[:44100] == 1))
        self.assertEqual(last.n_valid_frames, 87)

    def test_exact_multiple_has_no_padding(self):
        audio = np.ones(6 * 44100, dtype=np.float32)
        records = segment_clip(audio, [], self.catalog)
        self.assertEqual(len(records), 2)
        self.assertTrue(all(record.n_valid_samples == SEGMENT_SAMPLES for record in records))

    def test_unsegment_restores_audio(self):
        audio = np.random.default_rng(1).standard_normal(300_000).astype(np.float32)
        np.testing.assert_array_equal(unsegment(segment_clip(audio, [], self.catalog)), audio)

    def test_note_across_boundary_lands_in_both_segments(self):
        violin = self.catalog.index_of(VIOLIN)
        event = NoteEvent(SEGMENT_SAMPLES - 5000, SEGMENT_SAMPLES + 5000, 76, VIOLIN)
        first, second = segment_clip(np.ones(2 * SEGMENT_SAMPLES, dtype=np.float32), [event], self.catalog)
        self.assertEqual(first.label_roll.data[-1, violin], 1)
        self.assertEqual(second.label_roll.data[0, violin], 1)
        self.assertEqual(second.label_roll.data[20, violin], 0)

    def test_empty_audio(self):
        with self.assertRaises(EmptyAudioError):
            segment_clip(np.zeros(0, dtype=np.float32), [], self.catalog)


class DiscoverClipsTests(TempDirMixin, SimpleTestCase):
    def test_empty_directory_lists_expected_structure(self):
        with self.assertRaises(MissingInputsError) as ctx:
            discover_clips(self.tmp)
        self.assertIn('<dataset_root>/train_data/<clip_id>.wav', ctx.exception.details['expected_structure'])

    def test_missing_files_listed_exhaustively(self):
        make_dataset(self.tmp)
        (self.tmp / 'train_labels' / '1001.csv').unlink()
        (self.tmp / 'test_data' / '2001.wav').unlink()
        with self.assertRaises(MissingInputsError) as ctx:
            discover_clips(self.tmp)
        missing = ctx.exception.details['missing']
        self.assertEqual(len(missing), 2)
        self.assertTrue(any(path.endswith('1001.csv') for path in missing))
        self.assertTrue(any(path.endswith('2001.wav') for path in missing))

    def test_layout_split(self):
        make_dataset(self.tmp)
        manifests = discover_clips(self.tmp)
        self.assertEqual([(m.clip_id, m.split) for m in manifests],
                         [('2001', 'test'), ('1001', 'train'), ('1002', 'train'), ('1003', 'train')])

    def test_split_manifest_overrides_layout(self):
        make_dataset(self.tmp)
        manifest = self.tmp / 'split.csv'
        manifest.write_text('clip_id,split\n1003,train\n1001,train\n')
        manifests = discover_clips(self.tmp, manifest)
        self.assertEqual([m.clip_id for m in manifests], ['1003', '1001'])
        self.assertEqual([m.manifest_order for m in manifests], [0, 1])

    def test_split_manifest_bad_row_names_line(self):
        manifest = self.tmp / 'split.csv'
        manifest.write_text('clip_id,split\n1001,train\n 1002 , validation\n')
        with self.assertRaises(MissingInputsError) as ctx:
            read_split_manifest(manifest)
        self.assertEqual(ctx.exception.details['line'], 3)
        manifest.write_text('clip_id,split\n 1001 , test\n')
        self.assertEqual(read_split_manifest(manifest), [('1001', 'test')])



class IngestServiceTests(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        make_dataset(self.tmp / 'dataset')
        write_clip(self.tmp / 'dataset', 'train', '1004', 3.0, [])
        self.pipeline = PipelineService(pipeline_config(self.tmp))

    def test_ingest_summary(self):
        summary = self.pipeline.ingest()
        self.assertEqual(summary['train']['clips'], 4)
        self.assertEqual(summary['test']['clips'], 1)
        # 4 s, 3.5 s, 4 s, 3 s
        self.assertEqual(summary['train']['segments'], 2 + 2 + 2 + 1)
        self.assertEqual(summary['train']['instrument_histogram'], {0: 1, 2: 3})
        self.assertEqual(self.pipeline.clip_service.find_by_id('1004').n_instruments, 0)

    def test_rerun_is_cached(self):
        self.pipeline.ingest()
        summary = self.pipeline.ingest()
        self.assertEqual(summary['train']['cached'], 4)
        self.assertEqual(summary['test']['cached'], 1)

    def test_changed_labels_reingest_clip(self):
        self.pipeline.ingest()
        write_clip(self.tmp / 'dataset', 'train', '1004', 3.0, [(0.0, 1.0, CELLO, 50)])
        summary = self.pipeline.ingest()
        self.assertEqual(summary['train']['cached'], 3)
        self.assertEqual(self.pipeline.clip_service.find_by_id('1004').n_instruments, 1)

    def test_store_round_trip(self):
        self.pipeline.ingest()
        store = SegmentStore(self.pipeline.config.paths.store_dir)
        paths = store.clip_segments('train', '1001')
        self.assertEqual(len(paths), 2)
        record = store.read_segment(paths[0])
        self.assertEqual(record.clip_id, '1001')
        self.assertEqual(record.label_roll.shape, (N_FRAMES, N_INSTRUMENTS))
        piano = self.pipeline.catalog.index_of(PIANO)
        # piano plays 0 to 2 s
        self.assertEqual(record.label_roll.data[10, piano], 1)
        self.assertEqual(record.label_roll.data[200, piano], 0)
        self.assertEqual(record.pitch_roll.data[10, 60 - 21], 1)
        provenance = store.read_provenance(paths[0])
        self.assertIn('config_hash', provenance)

    def test_feature_statistics_stream_training_frames(self):
        self.pipeline.ingest()
        train_ids = self.pipeline.clip_ids('train')
        frames = self.pipeline.cached_frames('train', train_ids)
        self.assertTrue(inspect.isgenerator(frames))
        expected = FeatureStats.from_rasters(list(frames))

        summary = self.pipeline.compute_features()
        self.assertEqual(summary['segments'], 7 + 2)
        self.assertEqual(summary['cached'], 7)
        stored = self.pipeline.feature_cache.load_stats()
        np.testing.assert_allclose(stored.mean, expected.mean)
        np.testing.assert_allclose(stored.std, expected.std)

    def test_spawned_workers_match_serial_ingest(self):
        manifests = discover_clips(self.tmp / 'dataset')
        service = IngestService(self.pipeline.catalog, SegmentStore(self.tmp / 'spawned'), self.pipeline.clip_service,
                                self.pipeline.geometry_hash, mp_context=multiprocessing.get_context('spawn'))
        summary = service.ingest(manifests, workers=2)
        self.assertEqual(summary['train']['segments'], 7)
        self.assertEqual(summary['test']['segments'], 2)
        self.assertEqual(len(SegmentStore(self.tmp / 'spawned').clip_segments('train', '1001')), 2)

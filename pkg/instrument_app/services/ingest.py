"""
Ingest of MusicNet-style recordings: note tables, 3-second segments and
frame-level label/pitch rolls
"""
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

import django
import librosa
import numpy as np
import pandas as pd
from tqdm import tqdm

from ..exceptions import (
    AudioDecodeError,
    EmptyAudioError,
    InvalidAudioError,
    LabelParseError,
    MissingInputsError,
)
from .catalog import InstrumentCatalog
from .geometry import (
    AXIS_INSTRUMENT,
    AXIS_PITCH,
    HOP,
    MIDI_HIGH,
    MIDI_LOW,
    N_FRAMES,
    N_INSTRUMENTS,
    N_PITCH_BINS,
    SAMPLE_RATE,
    SEGMENT_SAMPLES,
    FrameRaster,
    active_frame_range,
)
from .provenance import content_hash, file_hash

logger = logging.getLogger(__name__)

LABEL_COLUMNS = ('start_time', 'end_time', 'instrument', 'note')

SPLIT_LAYOUT = {
    'train': ('train_data', 'train_labels'),
    'test': ('test_data', 'test_labels'),
}

EXPECTED_STRUCTURE = [
    '<dataset_root>/train_data/<clip_id>.wav',
    '<dataset_root>/train_labels/<clip_id>.csv',
    '<dataset_root>/test_data/<clip_id>.wav',
    '<dataset_root>/test_labels/<clip_id>.csv',
    'optional: split manifest CSV with columns clip_id,split',
]


@dataclass(frozen=True)
class NoteEvent:
    """One annotated note; sample indices at 44.1 kHz, offset exclusive."""
    onset_sample: int
    offset_sample: int
    midi_pitch: int
    instrument_code: int
    labeled: bool = True


@dataclass(frozen=True)
class ClipManifest:
    clip_id: str
    split: str
    audio_path: Path
    labels_path: Path
    duration_samples: int = 0
    manifest_order: int = 0


@dataclass(frozen=True)
class SegmentRecord:
    """
    One 3-second example: padded audio, instrument roll and pitch roll.
    """
    clip_id: str
    segment_index: int
    audio: np.ndarray
    label_roll: FrameRaster
    pitch_roll: FrameRaster
    n_valid_samples: int = SEGMENT_SAMPLES

    def __post_init__(self):
        if self.audio.shape != (SEGMENT_SAMPLES,):
            raise InvalidAudioError(
                f"Segment audio must hold {SEGMENT_SAMPLES} samples, got {self.audio.shape}",
                {'clip_id': self.clip_id, 'segment_index': self.segment_index},
            )

    @property
    def n_valid_frames(self) -> int:
        """Frames that start inside the unpadded part of the segment."""
        return min(N_FRAMES, -(-self.n_valid_samples // HOP))


def parse_labels(labels_path, catalog: InstrumentCatalog) -> list:
    """
    Parse a MusicNet label table.

    Args:
        labels_path: CSV with start_time, end_time, instrument, note columns
            (times are sample indices at 44.1 kHz)
        catalog: Recognized instruments; other codes are kept but unlabeled

    Returns:
        List of NoteEvent in file order

    Raises:
        LabelParseError: If a column is missing or a row is malformed. The
            error names the file line (the header is line 1).
    """
    path = Path(labels_path)
    if path.stat().st_size == 0:
        return []

    try:
        table = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as e:
        raise LabelParseError(f"Cannot parse {path}: {e}", {'path': str(path)}) from e

    missing = [column for column in LABEL_COLUMNS if column not in table.columns]
    if missing:
        raise LabelParseError(
            f"{path} lacks columns {missing}",
            {'path': str(path), 'missing_columns': missing},
        )

    numeric = table[list(LABEL_COLUMNS)].apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1) | (numeric % 1 != 0).any(axis=1)
    values = numeric.fillna(-1).to_numpy(dtype=np.int64)
    onset, offset, code, pitch = values.T
    bad |= (onset < 0) | (offset <= onset) | (pitch < 0) | (pitch > 127)

    if bad.any():
        index = int(np.flatnonzero(bad.to_numpy())[0])
        line = index + 2
        raise LabelParseError(
            f"Malformed row at line {line} of {path}: {table.iloc[index].to_dict()}",
            {'path': str(path), 'line': line},
        )

    events = [
        NoteEvent(int(on), int(off), int(p), int(c), labeled=int(c) in catalog)
        for on, off, c, p in zip(onset, offset, code, pitch)
    ]

    unlabeled = sum(1 for event in events if not event.labeled)
    if unlabeled:
        logger.debug(f"{path.name}: {unlabeled} notes from instruments outside the catalog")

    return events


def rasterize_labels(events: Iterable[NoteEvent], catalog: InstrumentCatalog,
                     n_frames: int = N_FRAMES) -> FrameRaster:
    """
    Instrument roll of one segment.

    Entry (t, n) is 1 iff a labeled note of instrument n covers the center
    sample of frame t.

    Args:
        events: Notes already clipped to the segment
        catalog: Column order

    Returns:
        FrameRaster of shape (n_frames, 7), uint8
    """
    roll = np.zeros((n_frames, N_INSTRUMENTS), dtype=np.uint8)
    for event in events:
        if not event.labeled:
            continue
        column = catalog.index_of(event.instrument_code)
        if column is None:
            continue
        first, stop = active_frame_range(event.onset_sample, event.offset_sample, n_frames)
        if first < stop:
            roll[first:stop, column] = 1
    return FrameRaster(roll, f_axis=AXIS_INSTRUMENT)


def pitch_to_bin(midi_pitch: int) -> int:
    return midi_pitch - MIDI_LOW


def rasterize_pitch(events: Iterable[NoteEvent], n_frames: int = N_FRAMES) -> FrameRaster:
    """
    Piano-range pitch roll of one segment, all instruments included.

    Entry (t, f) is 1 iff a note with pitch MIDI_LOW + f covers the center
    sample of frame t. Pitches outside MIDI 21..108 are dropped.

    Args:
        events: Notes already clipped to the segment

    Returns:
        FrameRaster of shape (n_frames, 88), uint8
    """
    roll = np.zeros((n_frames, N_PITCH_BINS), dtype=np.uint8)
    dropped = 0
    for event in events:
        if not MIDI_LOW <= event.midi_pitch <= MIDI_HIGH:
            dropped += 1
            continue
        first, stop = active_frame_range(event.onset_sample, event.offset_sample, n_frames)
        if first < stop:
            roll[first:stop, pitch_to_bin(event.midi_pitch)] = 1
    if dropped:
        logger.warning(f"Dropped {dropped} notes outside MIDI {MIDI_LOW}..{MIDI_HIGH}")
    return FrameRaster(roll, f_axis=AXIS_PITCH)


def clip_events(events: Iterable[NoteEvent], start: int, stop: int) -> list:
    """Restrict notes to [start, stop) and make them relative to start."""
    clipped = []
    for event in events:
        onset = max(event.onset_sample, start)
        offset = min(event.offset_sample, stop)
        if onset < offset:
            clipped.append(replace(event, onset_sample=onset - start, offset_sample=offset - start))
    return clipped


def segment_clip(audio: np.ndarray, events: list, catalog: InstrumentCatalog,
                 clip_id: str = '') -> list:
    """
    Cut a clip into 3-second segments with their rolls.

    Args:
        audio: Mono samples at 44.1 kHz
        events: Notes of the whole clip
        catalog: Instrument column order
        clip_id: Provenance recorded on every segment

    Returns:
        ceil(len(audio) / 132300) SegmentRecords; the last one zero-padded

    Raises:
        EmptyAudioError: If the buffer holds no samples
        InvalidAudioError: If the buffer is not one-dimensional
    """
    audio = np.asarray(audio, dtype=np.float32)
    if audio.ndim != 1:
        raise InvalidAudioError(f"Expected mono audio, got shape {audio.shape}", {'clip_id': clip_id})
    if audio.size == 0:
        raise EmptyAudioError(f"Clip {clip_id!r} has no samples", {'clip_id': clip_id})

    n_segments = -(-audio.size // SEGMENT_SAMPLES)
    records = []
    for index in range(n_segments):
        start = index * SEGMENT_SAMPLES
        stop = start + SEGMENT_SAMPLES
        chunk = audio[start:stop]
        n_valid = chunk.size
        if n_valid < SEGMENT_SAMPLES:
            chunk = np.concatenate([chunk, np.zeros(SEGMENT_SAMPLES - n_valid, dtype=np.float32)])

        segment_events = clip_events(events, start, stop)
        records.append(SegmentRecord(
            clip_id=clip_id,
            segment_index=index,
            audio=chunk,
            label_roll=rasterize_labels(segment_events, catalog),
            pitch_roll=rasterize_pitch(segment_events),
            n_valid_samples=n_valid,
        ))
    return records


def unsegment(records: list) -> np.ndarray:
    """Concatenate segment audio and drop the padding."""
    ordered = sorted(records, key=lambda record: record.segment_index)
    return np.concatenate([record.audio[:record.n_valid_samples] for record in ordered])


def load_audio(audio_path, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """
    Decode an audio file to mono float32 at the given rate.

    Raises:
        AudioDecodeError: If the file cannot be decoded
    """
    try:
        audio, _ = librosa.load(str(audio_path), sr=sample_rate, mono=True)
    except Exception as e:
        raise AudioDecodeError(f"Cannot decode {audio_path}: {e}", {'path': str(audio_path)}) from e
    return audio.astype(np.float32)


def count_catalog_instruments(events: Iterable[NoteEvent]) -> int:
    """Number of distinct catalog instruments playing in a clip."""
    return len({event.instrument_code for event in events if event.labeled})


def read_split_manifest(path) -> list:
    """
    Read a clip_id,split CSV.

    Returns:
        List of (clip_id, split) in file order
    """
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as e:
        raise MissingInputsError(f"Cannot parse split manifest {path}: {e}", {'path': str(path)}) from e
    table = table.reindex(columns=['clip_id', 'split'], fill_value='')

    rows = []
    # header is line 1
    for line, row in enumerate(table.itertuples(index=False), start=2):
        clip_id, split = row.clip_id.strip(), row.split.strip()
        if split not in SPLIT_LAYOUT or not clip_id:
            raise MissingInputsError(
                f"Bad split manifest row at line {line} of {path}",
                {'path': str(path), 'line': line},
            )
        rows.append((clip_id, split))
    return rows




def discover_clips(dataset_root, split_manifest=None) -> list:
    """
    List the clips of a MusicNet-style dataset directory.

    Args:
        dataset_root: Directory with train_data/, train_labels/, test_data/, test_labels/
        split_manifest: Optional clip_id,split CSV overriding the directory layout

    Returns:
        ClipManifest list ordered by split then manifest order

    Raises:
        MissingInputsError: Listing every missing file at once
    """
    root = Path(dataset_root)
    if not root.is_dir():
        raise MissingInputsError(
            f"Dataset root {root} does not exist",
            {'dataset_root': str(root), 'expected_structure': EXPECTED_STRUCTURE},
        )

    if split_manifest:
        entries = read_split_manifest(split_manifest)
    else:
        entries = []
        for split, (audio_dir, labels_dir) in SPLIT_LAYOUT.items():
            ids = {p.stem for p in (root / audio_dir).glob('*.wav')}
            ids |= {p.stem for p in (root / labels_dir).glob('*.csv')}
            entries.extend((clip_id, split) for clip_id in sorted(ids))

    if not entries:
        raise MissingInputsError(
            f"No clips found under {root}",
            {'dataset_root': str(root), 'expected_structure': EXPECTED_STRUCTURE},
        )

    manifests = []
    missing = []
    order = Counter()
    for clip_id, split in entries:
        audio_dir, labels_dir = SPLIT_LAYOUT[split]
        audio_path = root / audio_dir / f"{clip_id}.wav"
        labels_path = root / labels_dir / f"{clip_id}.csv"
        for path in (audio_path, labels_path):
            if not path.exists():
                missing.append(str(path))
        manifests.append(ClipManifest(clip_id, split, audio_path, labels_path, manifest_order=order[split]))
        order[split] += 1

    if missing:
        raise MissingInputsError(
            f"{len(missing)} dataset files are missing",
            {'missing': missing, 'expected_structure': EXPECTED_STRUCTURE},
        )

    return sorted(manifests, key=lambda m: (m.split, m.manifest_order))


def ingest_clip(manifest: ClipManifest, catalog: InstrumentCatalog) -> tuple:
    """
    Decode, parse and segment one clip.

    Returns:
        (manifest with duration filled in, segment records, catalog instruments used)
    """
    audio = load_audio(manifest.audio_path)
    events = parse_labels(manifest.labels_path, catalog)
    records = segment_clip(audio, events, catalog, clip_id=manifest.clip_id)
    return replace(manifest, duration_samples=int(audio.size)), records, count_catalog_instruments(events)


class IngestService:
    """Writes the segment store and the clip registry for a dataset"""

    def __init__(self, catalog: InstrumentCatalog, store, clip_service, geometry_hash: str, mp_context=None):
        self.catalog = catalog
        self.store = store
        self.clip_service = clip_service
        self.geometry_hash = geometry_hash
        self.mp_context = mp_context

    def source_hash(self, manifest: ClipManifest) -> str:
        return content_hash({
            'audio': file_hash(manifest.audio_path),
            'labels': file_hash(manifest.labels_path),
            'catalog': self.catalog.to_dict(),
            'geometry': self.geometry_hash,
            'split': manifest.split,
        })

    def is_cached(self, manifest: ClipManifest, source_hash: str) -> bool:
        clip = self.clip_service.find_by_id(manifest.clip_id)
        if clip is None or clip.source_hash != source_hash:
            return False
        return self.store.has_clip(manifest.split, manifest.clip_id, clip.n_segments)

    def ingest(self, manifests: list, workers: int = 1, provenance: Optional[dict] = None) -> dict:
        """
        Ingest every clip not already stored with identical inputs.

        Args:
            manifests: Clips to ingest
            workers: Process count for decoding and segmentation
            provenance: Config record embedded into every segment file

        Returns:
            Summary dictionary per split: clips, segments, cached, instrument_histogram
        """
        summary = {
            split: {'clips': 0, 'segments': 0, 'cached': 0, 'instrument_histogram': Counter()}
            for split in SPLIT_LAYOUT
        }

        pending = []
        for manifest in manifests:
            source_hash = self.source_hash(manifest)
            if self.is_cached(manifest, source_hash):
                clip = self.clip_service.find_by_id(manifest.clip_id)
                self._count(summary, manifest.split, clip.n_segments, clip.n_instruments, cached=True)
            else:
                pending.append((manifest, source_hash))

        if pending:
            logger.info(f"Ingesting {len(pending)} clips ({len(manifests) - len(pending)} cached)")
        else:
            logger.info(f"All {len(manifests)} clips cached, nothing to ingest")

        hashes = {manifest.clip_id: source_hash for manifest, source_hash in pending}
        for manifest, records, n_instruments in self._run(pending, workers):
            self.store.clear_clip(manifest.split, manifest.clip_id)
            for record in records:
                self.store.write_segment(record, manifest.split, provenance or {})
            self.clip_service.upsert_clip({
                'clip_id': manifest.clip_id,
                'split': manifest.split,
                'manifest_order': manifest.manifest_order,
                'audio_path': str(manifest.audio_path),
                'labels_path': str(manifest.labels_path),
                'duration_samples': manifest.duration_samples,
                'n_segments': len(records),
                'n_instruments': n_instruments,
                'source_hash': hashes[manifest.clip_id],
                'store_dir': str(self.store.clip_dir(manifest.split, manifest.clip_id)),
            })
            self._count(summary, manifest.split, len(records), n_instruments, cached=False)

        for split_summary in summary.values():
            split_summary['instrument_histogram'] = dict(sorted(split_summary['instrument_histogram'].items()))
        return summary

    def _run(self, pending: list, workers: int):
        manifests = [manifest for manifest, _ in pending]
        progress = dict(total=len(manifests), desc='ingest', unit='clip', disable=not manifests)
        if workers > 1:
            # spawned workers reach the ORM models when importing this package
            with ProcessPoolExecutor(max_workers=workers, mp_context=self.mp_context,
                                     initializer=django.setup) as pool:
                results = pool.map(ingest_clip, manifests, [self.catalog] * len(manifests))
                yield from tqdm(results, **progress)
        else:
            for manifest in tqdm(manifests, **progress):
                yield ingest_clip(manifest, self.catalog)

    @staticmethod
    def _count(summary: dict, split: str, n_segments: int, n_instruments: int, cached: bool):
        entry = summary[split]
        entry['clips'] += 1
        entry['segments'] += n_segments
        entry['cached'] += int(cached)
        entry['instrument_histogram'][n_instruments] += 1

"""
Per-instrument threshold tuning and frame-level F1 reports
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import ShapeMismatchError
from .geometry import N_INSTRUMENTS

logger = logging.getLogger(__name__)

THRESHOLD_GRID = np.arange(1, 100) / 100.0  # 0.01 .. 0.99


@dataclass(frozen=True)
class ThresholdVector:
    """One decision threshold per instrument, each on the 0.01 grid."""
    values: tuple

    def __post_init__(self):
        if len(self.values) != N_INSTRUMENTS:
            raise ShapeMismatchError(
                f"Need {N_INSTRUMENTS} thresholds, got {len(self.values)}",
                {'expected': N_INSTRUMENTS, 'actual': len(self.values)},
            )
        off_grid = [v for v in self.values if not np.any(np.isclose(v, THRESHOLD_GRID, rtol=0, atol=1e-9))]
        if off_grid:
            raise ShapeMismatchError(f"Thresholds {off_grid} are not on the 0.01..0.99 grid")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def save(self, path, names: Optional[list] = None, provenance: Optional[dict] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            'thresholds': [float(v) for v in self.values],
            'instruments': names or [],
            'provenance': provenance or {},
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> 'ThresholdVector':
        payload = json.loads(Path(path).read_text())
        return cls(tuple(float(v) for v in payload['thresholds']))


def _check_aligned(predictions: np.ndarray, labels: np.ndarray) -> None:
    if predictions.shape != labels.shape or predictions.ndim != 2:
        raise ShapeMismatchError(
            f"Predictions {predictions.shape} and labels {labels.shape} must be aligned (N, K) arrays",
            {'predictions': list(predictions.shape), 'labels': list(labels.shape)},
        )


def f1_from_counts(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    """F1 = 2TP / (2TP + FP + FN), and 0 when there is no true positive."""
    tp = np.asarray(tp, dtype=np.float64)
    denominator = 2 * tp + fp + fn
    return np.where(tp > 0, 2 * tp / np.maximum(denominator, 1), 0.0)


def threshold_f1_curve(scores: np.ndarray, positives: np.ndarray,
                       grid: np.ndarray = THRESHOLD_GRID) -> np.ndarray:
    """
    F1 of one instrument at every grid threshold, predicting active iff score >= threshold.

    Args:
        scores: (N,) continuous predictions
        positives: (N,) binary labels

    Returns:
        (len(grid),) F1 values
    """
    order = np.argsort(scores, kind='stable')
    sorted_scores = scores[order]
    sorted_positive = positives[order].astype(np.int64)
    # positives among the first i sorted scores
    positive_prefix = np.concatenate([[0], np.cumsum(sorted_positive)])
    total_positive = positive_prefix[-1]

    below = np.searchsorted(sorted_scores, grid, side='left')
    predicted = scores.size - below
    tp = total_positive - positive_prefix[below]
    fp = predicted - tp
    fn = total_positive - tp
    return f1_from_counts(tp, fp, fn)


def tune_thresholds(predictions: np.ndarray, labels: np.ndarray) -> ThresholdVector:
    """
    Pick, per instrument, the grid threshold with the best F1 on the given frames.

    Args:
        predictions: (N, 7) probabilities of concatenated training frames
        labels: (N, 7) binary labels

    Returns:
        ThresholdVector; ties go to the smallest threshold
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    _check_aligned(predictions, labels)

    chosen = []
    for n in range(predictions.shape[1]):
        curve = threshold_f1_curve(predictions[:, n], labels[:, n] > 0)
        chosen.append(float(THRESHOLD_GRID[int(np.argmax(curve))]))
    return ThresholdVector(tuple(chosen))


@dataclass
class InstrumentScore:
    name: str
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    """Frame-level scores of one method on one evaluation set."""
    method: str
    instruments: list
    macro_f1: float
    per_clip: dict = field(default_factory=dict)
    thresholds: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def names(self) -> list:
        return [score.name for score in self.instruments]

    def f1_by_name(self) -> dict:
        return {score.name: score.f1 for score in self.instruments}

    def to_dict(self) -> dict:
        return {
            'method': self.method,
            'instruments': [asdict(score) for score in self.instruments],
            'macro_f1': self.macro_f1,
            'per_clip': self.per_clip,
            'thresholds': self.thresholds,
            'provenance': self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'EvalReport':
        return cls(
            method=data['method'],
            instruments=[InstrumentScore(**score) for score in data['instruments']],
            macro_f1=data['macro_f1'],
            per_clip=data.get('per_clip', {}),
            thresholds=data.get('thresholds', []),
            provenance=data.get('provenance', {}),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> 'EvalReport':
        return cls.from_dict(json.loads(Path(path).read_text()))

    def format_table(self) -> str:
        return format_method_table([self])


def _scores(binary: np.ndarray, labels: np.ndarray) -> tuple:
    positive = labels > 0
    tp = np.sum(binary & positive, axis=0)
    fp = np.sum(binary & ~positive, axis=0)
    fn = np.sum(~binary & positive, axis=0)
    return tp, fp, fn


def frame_f1(predictions: np.ndarray, labels: np.ndarray, thresholds: ThresholdVector,
             names: list, clip_offsets: Optional[dict] = None, method: str = '',
             provenance: Optional[dict] = None) -> EvalReport:
    """
    Frame-level precision, recall and F1 per instrument over concatenated frames.

    Args:
        predictions: (N, 7) probabilities
        labels: (N, 7) binary labels
        thresholds: Decision thresholds; a frame is active iff prediction >= threshold
        names: Instrument names in column order
        clip_offsets: Optional clip_id -> slice of rows, for the per-clip breakdown
        method: Row label of the report
        provenance: Provenance record to embed

    Returns:
        EvalReport whose macro F1 is the unweighted mean of the per-instrument F1
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    _check_aligned(predictions, labels)
    if predictions.shape[1] != len(names):
        raise ShapeMismatchError(
            f"{predictions.shape[1]} prediction columns but {len(names)} instrument names",
            {'columns': predictions.shape[1], 'names': len(names)},
        )

    theta = thresholds.as_array()
    binary = predictions >= theta
    tp, fp, fn = _scores(binary, labels)
    f1 = f1_from_counts(tp, fp, fn)

    instruments = []
    for n, name in enumerate(names):
        precision = tp[n] / (tp[n] + fp[n]) if tp[n] + fp[n] else 0.0
        recall = tp[n] / (tp[n] + fn[n]) if tp[n] + fn[n] else 0.0
        instruments.append(InstrumentScore(
            name=name,
            threshold=float(theta[n]),
            tp=int(tp[n]),
            fp=int(fp[n]),
            fn=int(fn[n]),
            precision=float(precision),
            recall=float(recall),
            f1=float(f1[n]),
        ))

    per_clip = {}
    for clip_id, rows in (clip_offsets or {}).items():
        clip_f1 = f1_from_counts(*_scores(binary[rows], labels[rows]))
        per_clip[clip_id] = {name: float(clip_f1[n]) for n, name in enumerate(names)}
        per_clip[clip_id]['Avg.'] = float(np.mean(clip_f1))

    return EvalReport(
        method=method,
        instruments=instruments,
        macro_f1=float(np.mean([score.f1 for score in instruments])),
        per_clip=per_clip,
        thresholds=[float(v) for v in theta],
        provenance=provenance or {},
    )


def macro_f1_at_best_thresholds(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Macro F1 with thresholds tuned on the same frames; used for model selection."""
    predictions = np.asarray(predictions, dtype=np.float64)
    _check_aligned(predictions, labels)
    best = [
        float(np.max(threshold_f1_curve(predictions[:, n], labels[:, n] > 0)))
        for n in range(predictions.shape[1])
    ]
    return float(np.mean(best))


def format_method_table(reports: list, mark_best: bool = False) -> str:
    """
    Text table with one row per method and one column per instrument plus Avg.

    Args:
        reports: EvalReports sharing the same instrument order
        mark_best: Append '*' to the best value of each column
    """
    if not reports:
        return ''
    names = reports[0].names
    columns = names + ['Avg.']
    rows = [[score.f1 for score in report.instruments] + [report.macro_f1] for report in reports]
    best = np.max(np.asarray(rows), axis=0) if rows else []

    method_width = max(len('Method'), *(len(report.method) for report in reports))
    widths = [max(len(column), 6) for column in columns]
    header = 'Method'.ljust(method_width) + ' | ' + ' '.join(c.rjust(w) for c, w in zip(columns, widths))
    lines = [header, '-' * len(header)]
    for report, values in zip(reports, rows):
        cells = []
        for value, width, top in zip(values, widths, best):
            text = f"{value:.3f}"
            if mark_best and len(reports) > 1 and value == top:
                text += '*'
            cells.append(text.rjust(width))
        lines.append(report.method.ljust(method_width) + ' | ' + ' '.join(cells))
    return '\n'.join(lines)


def best_method_per_instrument(reports: list) -> dict:
    """Instrument name -> method label with the highest F1 (first one on ties)."""
    if not reports:
        return {}
    result = {}
    for n, name in enumerate(reports[0].names):
        scores = [report.instruments[n].f1 for report in reports]
        result[name] = reports[int(np.argmax(scores))].method
    return result

"""
Piano-roll style figures: ground truth above the binarized predictions of each method
"""
import json
import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..exceptions import MissingThresholdsError, ShapeMismatchError  # noqa: E402
from .geometry import HOP, SAMPLE_RATE  # noqa: E402

logger = logging.getLogger(__name__)

INDEX_FILE = 'index.json'
GROUND_TRUTH_LABEL = 'Ground truth'


def render_clip_figure(truth: np.ndarray, methods: list, names: list, title: str = ''):
    """
    One strip per row: ground truth first, then each method.

    Args:
        truth: (T, 7) binary labels
        methods: (label, (T, 7) binary roll) pairs
        names: Instrument names, drawn top to bottom
        title: Figure title

    Returns:
        matplotlib Figure; active frames are black
    """
    truth = np.asarray(truth)
    for label, roll in methods:
        if np.shape(roll) != truth.shape:
            raise ShapeMismatchError(
                f"{label} roll {np.shape(roll)} does not match ground truth {truth.shape}",
                {'method': label, 'expected': list(truth.shape), 'actual': list(np.shape(roll))},
            )

    rows = [(GROUND_TRUTH_LABEL, truth)] + list(methods)
    n_frames = truth.shape[0]
    fig, axs = plt.subplots(len(rows), 1, sharex=True, squeeze=False,
                            figsize=(max(6.0, n_frames / 80), 1.4 * len(rows) + 0.6))
    for ax, (label, roll) in zip(axs[:, 0], rows):
        ax.imshow(np.asarray(roll, dtype=np.float32).T, aspect='auto', cmap='Greys', vmin=0, vmax=1,
                  interpolation='nearest', origin='upper')
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names, fontsize=7)
        ax.set_ylabel(label, fontsize=8)

    last = axs[-1, 0]
    ticks = last.get_xticks()
    last.set_xticks(ticks)
    last.set_xticklabels([f"{t * HOP / SAMPLE_RATE:.1f}" for t in ticks])
    last.set_xlim(-0.5, n_frames - 0.5)
    last.set_xlabel('time (s)')
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def _binarize(bundle) -> np.ndarray:
    if bundle.thresholds is None:
        raise MissingThresholdsError(
            f"Prediction bundle of {bundle.method or 'unnamed method'} carries no thresholds; "
            f"run tune_thresholds or eval first",
            {'method': bundle.method},
        )
    return (bundle.probabilities >= np.asarray(bundle.thresholds)).astype(np.uint8)


def render_plots(bundles: list, out_dir, names: list, clip_ids: Optional[list] = None,
                 provenance: Optional[dict] = None) -> Path:
    """
    Write one PNG per clip and an index file.

    Args:
        bundles: PredictionBundles of the methods to compare; labels are taken
            from the first one
        out_dir: Output directory
        names: Instrument names
        clip_ids: Clips to draw; default all clips of the first bundle
        provenance: Stamp written into the index

    Returns:
        Path of index.json

    Raises:
        ShapeMismatchError: If a method's roll length differs for a clip
    """
    if not bundles:
        raise ShapeMismatchError('Nothing to plot: no prediction bundles given')
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    reference = bundles[0]
    binarized = [_binarize(bundle) for bundle in bundles]
    index = {}
    for clip_id in clip_ids or reference.clip_ids:
        rows = reference.clip_slice(clip_id)
        truth = reference.labels[rows]
        methods = []
        for bundle, binary in zip(bundles, binarized):
            if clip_id not in bundle.clip_ids:
                raise ShapeMismatchError(f"{bundle.method} has no predictions for {clip_id}", {'clip_id': clip_id})
            methods.append((bundle.method or 'prediction', binary[bundle.clip_slice(clip_id)]))

        fig = render_clip_figure(truth, methods, names, title=clip_id)
        filename = f"{clip_id}.png"
        fig.savefig(out_dir / filename, dpi=100)
        plt.close(fig)
        index[clip_id] = {
            'figure': filename,
            'frames': int(truth.shape[0]),
            'rows': [GROUND_TRUTH_LABEL] + [label for label, _ in methods],
        }
        logger.debug(f"Wrote {out_dir / filename}")

    index_path = out_dir / INDEX_FILE
    index_path.write_text(json.dumps(
        {'instruments': names, 'clips': index, 'provenance': provenance or {}}, indent=2, sort_keys=True, default=str,
    ))
    logger.info(f"Wrote {len(index)} figures to {out_dir}")
    return index_path

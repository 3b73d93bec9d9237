"""
Weighted multi-label training with SGD, checkpoints and resume
"""
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch.optim.lr_scheduler import ReduceLROnPlateau
from torch.utils.data import DataLoader, Dataset
from tqdm import tqdm

from ..exceptions import ConfigError, GeometryMismatchError, ShapeMismatchError, TrainingDivergedError
from .evaluation import macro_f1_at_best_thresholds
from .geometry import N_INSTRUMENTS
from .nets import ModelSpec, build_model, forward_batch
from .provenance import FORMAT_VERSION

logger = logging.getLogger(__name__)

DEFAULT_WEIGHT_CAP = 10.0


@dataclass(frozen=True)
class LossConfig:
    """
    Positive-class weights w_n of the weighted cross entropy.

    class_weights None means "derive from the training labels" (compute_class_weights).
    """
    class_weights: Optional[tuple] = None
    weight_cap: float = DEFAULT_WEIGHT_CAP

    def __post_init__(self):
        if not self.weight_cap > 0:
            raise ConfigError(f"weight_cap must be positive, got {self.weight_cap}")
        if self.class_weights is None:
            return
        object.__setattr__(self, 'class_weights', tuple(float(w) for w in self.class_weights))
        weights = np.asarray(self.class_weights, dtype=np.float64)
        if weights.shape != (N_INSTRUMENTS,):
            raise ConfigError(f"Need {N_INSTRUMENTS} class weights, got {len(self.class_weights)}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 1):
            raise ConfigError(f"Class weights must be finite and >= 1, got {list(self.class_weights)}")

    @property
    def resolved(self) -> bool:
        return self.class_weights is not None

    def to_dict(self) -> dict:
        weights = None if self.class_weights is None else list(self.class_weights)
        return {'class_weights': weights, 'weight_cap': self.weight_cap}


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings; momentum 0.9 and learning rate 0.01 by default."""
    optimizer: str = 'sgd'
    momentum: float = 0.9
    initial_lr: float = 0.01
    lr_factor: float = 0.5
    lr_patience: int = 5
    batch_size: int = 16
    max_epochs: int = 100
    seed: int = 0
    validation_fraction: float = 0.1
    max_train_clips: Optional[int] = None

    def __post_init__(self):
        if self.optimizer != 'sgd':
            raise ConfigError(f"Only SGD is supported, got {self.optimizer!r}")
        if self.initial_lr < 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError('initial_lr must be >= 0, batch_size and max_epochs >= 1', asdict(self))
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError(f"validation_fraction must be in [0, 1), got {self.validation_fraction}")

    def to_dict(self) -> dict:
        return asdict(self)


def weighted_bce(logits: torch.Tensor, labels: torch.Tensor, weights) -> torch.Tensor:
    """
    Positive-weighted binary cross entropy on logits.

    Mean over frames and instruments of
    -[w_n * y * log sigmoid(z) + (1 - y) * log(1 - sigmoid(z))].

    Args:
        logits: (..., 7) pre-sigmoid outputs
        labels: Same shape, values in {0, 1}
        weights: LossConfig or sequence of 7 positive weights

    Raises:
        ShapeMismatchError: If logits and labels differ in shape
    """
    if logits.shape != labels.shape:
        raise ShapeMismatchError(
            f"Logits {tuple(logits.shape)} and labels {tuple(labels.shape)} differ",
            {'logits': list(logits.shape), 'labels': list(labels.shape)},
        )
    class_weights = weights.class_weights if isinstance(weights, LossConfig) else weights
    if class_weights is None:
        raise ConfigError('Class weights are unresolved; derive them with compute_class_weights first')
    pos_weight = torch.as_tensor(class_weights, dtype=logits.dtype, device=logits.device)
    return F.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype), pos_weight=pos_weight)


def compute_class_weights(label_rolls: Iterable[np.ndarray], weight_cap: float = DEFAULT_WEIGHT_CAP,
                          names: Optional[list] = None) -> LossConfig:
    """
    Negative/positive frame ratio per instrument, clipped to [1, weight_cap].

    Args:
        label_rolls: (T, 7) binary rolls of the training partition
        weight_cap: Upper bound, also used for instruments without positives
        names: Instrument names for log messages

    Returns:
        LossConfig
    """
    positives = np.zeros(N_INSTRUMENTS, dtype=np.int64)
    frames = 0
    for roll in label_rolls:
        roll = np.asarray(roll)
        positives += (roll > 0).sum(axis=0)
        frames += roll.shape[0]

    negatives = frames - positives
    weights = []
    for n in range(N_INSTRUMENTS):
        if positives[n] == 0:
            name = names[n] if names else f"instrument {n}"
            logger.warning(f"{name} has no positive training frames; weight set to the cap {weight_cap}")
            weights.append(float(weight_cap))
            continue
        ratio = negatives[n] / max(positives[n], 1)
        weights.append(float(np.clip(ratio, 1.0, weight_cap)))

    logger.info(f"Class weights: {[round(w, 3) for w in weights]}")
    return LossConfig(class_weights=tuple(weights), weight_cap=weight_cap)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def save_checkpoint(path, model: torch.nn.Module, **payload) -> Path:
    """
    Write a checkpoint holding the model spec, parameters and any metadata.

    Args:
        path: Destination
        model: Network built by build_model
        payload: Extra entries (optimizer state, geometry hash, config, ...)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint = {
        'format_version': FORMAT_VERSION,
        'model_spec': model.spec.to_dict(),
        'state_dict': model.state_dict(),
    }
    checkpoint.update(payload)
    torch.save(checkpoint, path)
    return path


def load_checkpoint(path, expected_geometry_hash: Optional[str] = None) -> dict:
    """
    Read a checkpoint.

    Args:
        path: Checkpoint file
        expected_geometry_hash: Refuse checkpoints built for another feature geometry

    Raises:
        GeometryMismatchError: If the geometry hashes differ
        ConfigError: If the format version is unsupported
    """
    checkpoint = torch.load(path, map_location='cpu', weights_only=False)
    version = checkpoint.get('format_version')
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path} has checkpoint format {version}, expected {FORMAT_VERSION}")

    stored = checkpoint.get('geometry_hash')
    if expected_geometry_hash is not None and stored != expected_geometry_hash:
        raise GeometryMismatchError(
            f"Checkpoint {path} was trained with geometry {stored}, the current pipeline has "
            f"{expected_geometry_hash}; features would not match the network. Re-train or use the "
            f"CQT/catalog settings recorded in the checkpoint.",
            {'checkpoint': stored, 'pipeline': expected_geometry_hash, 'path': str(path)},
        )
    return checkpoint


def model_from_checkpoint(checkpoint: dict) -> torch.nn.Module:
    model = build_model(ModelSpec.from_dict(checkpoint['model_spec']))
    model.load_state_dict(checkpoint['state_dict'])
    model.eval()
    return model


@dataclass
class TrainResult:
    best_checkpoint: Path
    last_checkpoint: Path
    loss_curve: list = field(default_factory=list)
    val_curve: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_macro_f1: float = -1.0


def predict_frames(model: torch.nn.Module, dataset: Dataset, batch_size: int) -> tuple:
    """
    Probabilities and labels of every unpadded frame of a dataset.

    Returns:
        ((N, 7) probabilities, (N, 7) labels)
    """
    probabilities, labels = [], []
    for inputs, targets, n_valid in DataLoader(dataset, batch_size=batch_size, shuffle=False):
        outputs = forward_batch(model, inputs)
        for output, target, valid in zip(outputs, targets.numpy(), n_valid.tolist()):
            probabilities.append(output[:valid])
            labels.append(target[:valid])
    if not probabilities:
        return np.zeros((0, N_INSTRUMENTS)), np.zeros((0, N_INSTRUMENTS))
    return np.concatenate(probabilities), np.concatenate(labels)


class Trainer:
    """
    Owns a model during training: SGD with momentum, halving the learning rate
    when validation macro F1 stalls, keeping the best and the last checkpoint.

    checkpoint_extra is stored in every checkpoint; its provenance entry is
    also written into the loss curve file.
    """

    BEST_NAME = 'best.pt'
    LAST_NAME = 'last.pt'
    LOG_NAME = 'train_log.jsonl'
    CURVE_NAME = 'loss_curve.json'

    def __init__(self, model: torch.nn.Module, train_config: TrainConfig, loss_config: LossConfig,
                 output_dir, checkpoint_extra: Optional[dict] = None, device: Optional[str] = None):
        self.model = model
        self.train_config = train_config
        self.loss_config = loss_config
        self.output_dir = Path(output_dir)
        self.checkpoint_extra = checkpoint_extra or {}
        self.device = torch.device(device or ('cuda' if torch.cuda.is_available() else 'cpu'))
        self.model.to(self.device)
        self.optimizer = torch.optim.SGD(
            self.model.parameters(),
            lr=train_config.initial_lr,
            momentum=train_config.momentum,
        )
        self.scheduler = ReduceLROnPlateau(
            self.optimizer,
            mode='max',
            factor=train_config.lr_factor,
            patience=train_config.lr_patience,
        )

    @property
    def lr(self) -> float:
        return float(self.optimizer.param_groups[0]['lr'])

    def _checkpoint(self, name: str, epoch: int, result: TrainResult) -> Path:
        return save_checkpoint(
            self.output_dir / name,
            self.model,
            optimizer=self.optimizer.state_dict(),
            scheduler=self.scheduler.state_dict(),
            epoch=epoch,
            loss_curve=list(result.loss_curve),
            val_curve=list(result.val_curve),
            best_epoch=result.best_epoch,
            best_val_macro_f1=result.best_val_macro_f1,
            train_config=self.train_config.to_dict(),
            loss_config=self.loss_config.to_dict(),
            **self.checkpoint_extra,
        )

    def _resume(self, path, result: TrainResult) -> int:
        checkpoint = load_checkpoint(path, self.checkpoint_extra.get('geometry_hash'))
        self.model.load_state_dict(checkpoint['state_dict'])
        self.optimizer.load_state_dict(checkpoint['optimizer'])
        self.scheduler.load_state_dict(checkpoint['scheduler'])
        result.loss_curve = list(checkpoint['loss_curve'])
        result.val_curve = list(checkpoint['val_curve'])
        result.best_epoch = checkpoint['best_epoch']
        result.best_val_macro_f1 = checkpoint['best_val_macro_f1']
        logger.info(f"Resuming from {path} after epoch {checkpoint['epoch']}")
        return checkpoint['epoch'] + 1

    def _log_epoch(self, record: dict) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        with open(self.output_dir / self.LOG_NAME, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, sort_keys=True) + '\n')

    def _train_epoch(self, dataset: Dataset, epoch: int) -> float:
        generator = torch.Generator().manual_seed(self.train_config.seed + epoch)
        loader = DataLoader(dataset, batch_size=self.train_config.batch_size, shuffle=True, generator=generator)

        self.model.train()
        total, count = 0.0, 0
        for batch_index, (inputs, targets, _) in enumerate(tqdm(loader, desc=f"epoch {epoch}", leave=False)):
            inputs = inputs.to(self.device)
            targets = targets.to(self.device)

            self.optimizer.zero_grad()
            loss = weighted_bce(self.model(inputs), targets, self.loss_config)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"Loss became {loss.item()} at epoch {epoch}, batch {batch_index} (lr {self.lr})",
                    {'epoch': epoch, 'batch': batch_index, 'lr': self.lr, 'loss': str(loss.item())},
                )
            loss.backward()
            self.optimizer.step()

            total += loss.item() * inputs.shape[0]
            count += inputs.shape[0]
        return total / max(count, 1)

    def fit(self, train_set: Dataset, val_set: Optional[Dataset] = None, resume_from=None) -> TrainResult:
        """
        Train for max_epochs, selecting the epoch with the best validation macro F1.

        Args:
            train_set: Dataset yielding (input, label roll, valid frame count)
            val_set: Held-out clips; when empty the training set is used for selection
            resume_from: last.pt of an interrupted run

        Returns:
            TrainResult

        Raises:
            TrainingDivergedError: If the loss turns NaN or infinite
        """
        result = TrainResult(
            best_checkpoint=self.output_dir / self.BEST_NAME,
            last_checkpoint=self.output_dir / self.LAST_NAME,
        )
        start_epoch = self._resume(resume_from, result) if resume_from else 0
        selection_set = val_set if val_set is not None and len(val_set) else train_set
        if selection_set is train_set:
            logger.warning('No validation clips; selecting the checkpoint on training F1')

        for epoch in range(start_epoch, self.train_config.max_epochs):
            lr = self.lr
            loss = self._train_epoch(train_set, epoch)
            probabilities, labels = predict_frames(self.model, selection_set, self.train_config.batch_size)
            val_f1 = macro_f1_at_best_thresholds(probabilities, labels) if len(labels) else 0.0

            result.loss_curve.append(loss)
            result.val_curve.append(val_f1)
            self.scheduler.step(val_f1)

            if val_f1 > result.best_val_macro_f1:
                result.best_val_macro_f1 = val_f1
                result.best_epoch = epoch
                self._checkpoint(self.BEST_NAME, epoch, result)

            self._checkpoint(self.LAST_NAME, epoch, result)
            self._log_epoch({'epoch': epoch, 'loss': loss, 'val_macro_f1': val_f1, 'lr': lr})
            logger.info(f"epoch {epoch}: loss {loss:.4f}, validation macro F1 {val_f1:.3f}, lr {lr:g}")

        (self.output_dir / self.CURVE_NAME).write_text(json.dumps({
            'loss': result.loss_curve,
            'val_macro_f1': result.val_curve,
            'best_epoch': result.best_epoch,
            'provenance': self.checkpoint_extra.get('provenance', {}),
        }, indent=2, default=str))
        return result

"""
Effective pipeline configuration: settings defaults < YAML config file < command flags
"""
import copy
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml
from django.conf import settings

from ..exceptions import ConfigError, MissingInputsError
from .catalog import InstrumentCatalog
from .features import CqtConfig
from .geometry import HOP, N_FRAMES, SAMPLE_RATE, SEGMENT_SAMPLES
from .nets import CQT_HSF, ModelSpec
from .provenance import content_hash, short_hash
from .training import LossConfig, TrainConfig

logger = logging.getLogger(__name__)

PITCH_GROUND_TRUTH = 'ground_truth'
PITCH_ESTIMATED = 'estimated'
PITCH_SOURCES = (PITCH_GROUND_TRUTH, PITCH_ESTIMATED)


@dataclass(frozen=True)
class PathsConfig:
    dataset_root: str = ''
    cache_dir: str = ''
    output_dir: str = ''
    split_manifest: Optional[str] = None

    @property
    def store_dir(self) -> Path:
        return Path(self.cache_dir) / 'segments'

    @property
    def feature_dir(self) -> Path:
        return Path(self.cache_dir) / 'features'


@dataclass(frozen=True)
class ModelConfig:
    variant: str = 'resblock1d'
    hsf_order: Optional[int] = 3
    width: int = 128

    def __post_init__(self):
        self.spec()

    def spec(self) -> ModelSpec:
        hsf_order = self.hsf_order if self.variant == CQT_HSF else None
        return ModelSpec(variant=self.variant, hsf_order=hsf_order, width=self.width)


@dataclass(frozen=True)
class PitchConfig:
    source: str = PITCH_GROUND_TRUTH
    salience_dir: Optional[str] = None

    def __post_init__(self):
        if self.source not in PITCH_SOURCES:
            raise ConfigError(
                f"Pitch source must be one of {PITCH_SOURCES}, got {self.source!r}",
                {'source': self.source, 'valid': list(PITCH_SOURCES)},
            )

    @property
    def label(self) -> str:
        return self.source.replace('_', ' ')


SECTIONS = {
    'paths': PathsConfig,
    'cqt': CqtConfig,
    'model': ModelConfig,
    'pitch': PitchConfig,
    'train': TrainConfig,
    'loss': LossConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    catalog_path: str = ''
    cqt: CqtConfig = field(default_factory=CqtConfig)
    normalize: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    pitch: PitchConfig = field(default_factory=PitchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> 'PipelineConfig':
        """
        Build a config from a nested dictionary.

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {unknown}", {'unknown': unknown})

        kwargs = {}
        for name, value in data.items():
            section = SECTIONS.get(name)
            if section is None:
                kwargs[name] = value
                continue
            value = dict(value or {})
            if section is LossConfig and value.get('class_weights') is not None:
                value['class_weights'] = tuple(value['class_weights'])
            try:
                kwargs[name] = section(**value)
            except TypeError as e:
                raise ConfigError(f"Invalid '{name}' section: {e}", {'section': name}) from e
        return cls(**kwargs)

    def to_dict(self) -> dict:
        data = asdict(self)
        if data['loss']['class_weights'] is not None:
            data['loss']['class_weights'] = list(data['loss']['class_weights'])
        return data

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    @property
    def hash(self) -> str:
        return content_hash(self.to_dict())

    def segment_geometry(self, catalog: InstrumentCatalog) -> dict:
        """Everything the segment store depends on."""
        return {
            'sample_rate': SAMPLE_RATE,
            'segment_samples': SEGMENT_SAMPLES,
            'hop': HOP,
            'n_frames': N_FRAMES,
            'catalog': catalog.to_dict(),
        }

    def segment_geometry_hash(self, catalog: InstrumentCatalog) -> str:
        return short_hash(self.segment_geometry(catalog))

    def geometry_hash(self, catalog: InstrumentCatalog) -> str:
        """
        Hash of everything a trained network's inputs depend on: segment grid,
        catalog, CQT parameters and normalization.
        """
        return short_hash({
            'segments': self.segment_geometry(catalog),
            'cqt': self.cqt.to_dict(),
            'normalize': self.normalize,
        })

    def require_paths(self, *names: str) -> None:
        """
        Check that the named paths exist.

        Raises:
            MissingInputsError: Listing every missing path
        """
        missing = {}
        for name in names:
            value = getattr(self.paths, name) if hasattr(self.paths, name) else getattr(self, name)
            if not value or not Path(value).exists():
                missing[name] = value
        if missing:
            raise MissingInputsError(f"Configured paths do not exist: {missing}", {'missing': missing})


def merge_dicts(base: dict, override: dict) -> dict:
    """Recursive dict merge; None values in override are ignored."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_dicts(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}", {'path': str(path)})
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse config file {path}: {e}", {'path': str(path)}) from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a mapping", {'path': str(path)})
    return data


def load_pipeline_config(config_path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """
    Resolve the effective configuration.

    Args:
        config_path: Optional YAML file
        overrides: Nested dictionary from command flags; None entries are skipped

    Returns:
        PipelineConfig
    """
    data = copy.deepcopy(settings.INSTREC_PIPELINE)
    if config_path:
        data = merge_dicts(data, read_config_file(config_path))
        logger.debug(f"Merged config file {config_path}")
    if overrides:
        data = merge_dicts(data, overrides)
    return PipelineConfig.from_dict(data)

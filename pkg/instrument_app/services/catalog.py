"""
Instrument catalog: which annotation codes are recognized, and in which order
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import yaml
from django.conf import settings

from ..exceptions import ConfigError
from .geometry import N_INSTRUMENTS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstrumentCatalog:
    """
    Ordered (instrument_code, name) pairs.

    The position of an entry is the column index n of every label vector.
    """
    entries: tuple

    def __post_init__(self):
        if len(self.entries) != N_INSTRUMENTS:
            raise ConfigError(
                f"Catalog must list exactly {N_INSTRUMENTS} instruments, got {len(self.entries)}",
                {'count': len(self.entries)},
            )
        names = [name for _, name in self.entries]
        codes = [code for code, _ in self.entries]
        if len(set(names)) != len(names) or len(set(codes)) != len(codes):
            raise ConfigError('Catalog names and codes must be unique', {'entries': list(self.entries)})

    @property
    def names(self) -> list:
        return [name for _, name in self.entries]

    @property
    def codes(self) -> list:
        return [code for code, _ in self.entries]

    def index_of(self, instrument_code: int) -> Optional[int]:
        """
        Label column of an instrument code.

        Args:
            instrument_code: Dataset instrument code

        Returns:
            Column index, or None when the instrument is not labeled
        """
        for index, (code, _) in enumerate(self.entries):
            if code == instrument_code:
                return index
        return None

    def __contains__(self, instrument_code: int) -> bool:
        return self.index_of(instrument_code) is not None

    def to_dict(self) -> dict:
        return {'instruments': [{'code': code, 'name': name} for code, name in self.entries]}


def load_catalog(path: Optional[Union[str, Path]] = None) -> InstrumentCatalog:
    """
    Load a catalog YAML file.

    Args:
        path: Catalog file; defaults to the catalog configured in settings

    Returns:
        InstrumentCatalog

    Raises:
        ConfigError: If the file is missing or malformed
    """
    path = Path(path or settings.INSTREC_PIPELINE['catalog_path'])
    if not path.exists():
        raise ConfigError(f"Catalog file not found: {path}", {'path': str(path)})

    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}

    try:
        entries = tuple((int(item['code']), str(item['name'])) for item in data['instruments'])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Malformed catalog file {path}: {e}", {'path': str(path)}) from e

    logger.debug(f"Loaded catalog from {path}: {[name for _, name in entries]}")
    return InstrumentCatalog(entries)

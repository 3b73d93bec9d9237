"""
Content hashes and provenance records embedded into every artifact
"""
import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    """Key-sorted compact JSON; the basis of every config hash."""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), default=_default)


def content_hash(obj) -> str:
    """
    SHA-256 of a JSON-serializable object.

    Args:
        obj: Dictionary, list or scalar

    Returns:
        Hex digest
    """
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def short_hash(obj, length: int = 16) -> str:
    return content_hash(obj)[:length]


def file_hash(path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def stamp(config: dict, inputs: dict) -> dict:
    """
    Provenance record for an output artifact.

    Args:
        config: Full effective pipeline configuration
        inputs: Name -> content hash of every input the artifact depends on

    Returns:
        Dictionary with format version, config, config hash and input hashes
    """
    return {
        'format_version': FORMAT_VERSION,
        'config': config,
        'config_hash': content_hash(config),
        'inputs': dict(sorted(inputs.items())),
    }


def _default(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")

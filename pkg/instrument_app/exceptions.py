"""
Pipeline exceptions.

Every error raised on purpose by the services derives from PipelineError, which
is a ValueError carrying a machine-readable code and details. Management
commands turn it into a JSON error record on stderr.
"""
import json
from typing import Optional


class PipelineError(ValueError):
    """Base class for expected pipeline failures"""

    code = 'PIPELINE_ERROR'

    def __init__(self, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_record(self) -> dict:
        """
        Build the machine-readable error record.

        Returns:
            Dictionary with error code, message and details
        """
        return {
            'error': self.code,
            'message': self.message,
            'details': self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, default=str)


class ConfigError(PipelineError):
    code = 'CONFIG_INVALID'


class LabelParseError(PipelineError):
    code = 'LABEL_PARSE_ERROR'


class AudioDecodeError(PipelineError):
    code = 'AUDIO_DECODE_ERROR'


class EmptyAudioError(PipelineError):
    code = 'EMPTY_AUDIO'


class InvalidAudioError(PipelineError):
    code = 'INVALID_AUDIO'


class ShapeMismatchError(PipelineError):
    code = 'SHAPE_MISMATCH'


class InvalidHarmonicError(PipelineError):
    code = 'INVALID_HARMONIC'


class InvalidVariantError(PipelineError):
    code = 'INVALID_VARIANT'


class MissingComponentError(PipelineError):
    code = 'MISSING_COMPONENT'


class GeometryMismatchError(PipelineError):
    code = 'GEOMETRY_MISMATCH'


class TrainingDivergedError(PipelineError):
    code = 'TRAINING_DIVERGED'


class MissingInputsError(PipelineError):
    code = 'MISSING_INPUTS'


class MissingThresholdsError(PipelineError):
    code = 'MISSING_THRESHOLDS'


class MissingSalienceError(PipelineError):
    code = 'MISSING_SALIENCE'

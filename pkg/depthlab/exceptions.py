"""
Exception hierarchy shared by every depthlab app.

Numerical contracts raise the DepthLabError subclasses below. Problems
with user-supplied configuration are Django ValidationErrors as well, so
forms, validators and library code report them the same way.
"""

from django.core.exceptions import ValidationError


class DepthLabError(Exception):
    """Base class for all errors raised by the depth pipeline."""


class ConfigError(ValidationError, DepthLabError):
    """A configuration value or a call argument is out of its valid range."""


class InvalidDepthError(DepthLabError, ValueError):
    """A depth that must be strictly positive was not."""


class DimensionError(DepthLabError, ValueError):
    """Tensor shapes do not agree."""


class ContractError(DepthLabError, ValueError):
    """An input breaks a numerical precondition (e.g. unnormalised weights)."""


class TapeError(DepthLabError, RuntimeError):
    """A gradient tape was reused or driven incorrectly."""


class DataError(DepthLabError):
    """Input data on disk is missing or inconsistent."""


class ParseError(DataError):
    """
    A file could not be parsed.

    Carries the path and the 1-based line (text formats) or the byte
    offset (binary formats) at which parsing failed.
    """

    def __init__(self, path, message, line=None, offset=None):
        self.path = str(path)
        self.line = line
        self.offset = offset
        if line is not None:
            where = f'{self.path}:{line}'
        elif offset is not None:
            where = f'{self.path}@{offset}'
        else:
            where = self.path
        super().__init__(f'{where}: {message}')


class StageError(DepthLabError):
    """A pipeline stage failed; `stage` names the stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f'stage "{stage}" failed: {cause}')


class TrainingDiverged(DepthLabError):
    """The training loss became NaN or infinite."""

    def __init__(self, epoch, step, loss, detail=''):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        message = f'loss diverged at epoch {epoch}, step {step}: {loss}'
        if detail:
            message = f'{message} ({detail})'
        super().__init__(message)

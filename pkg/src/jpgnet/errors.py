"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class JPGNetError(Exception):
    exit_code = 1


class UsageError(JPGNetError):
    exit_code = 2


class IOFormatError(JPGNetError):
    """Unreadable, malformed or unwritable file."""

    exit_code = 3


class BadMagicError(IOFormatError):
    pass


class VersionMismatchError(IOFormatError):
    pass


class TruncatedFileError(IOFormatError):
    pass


class ShapeError(JPGNetError, ValueError):
    exit_code = 4


class ConfigError(JPGNetError, ValueError):
    exit_code = 4


class PrerequisiteError(ConfigError):
    """A training stage was started before the checkpoints it depends on exist."""


class NumericError(JPGNetError, FloatingPointError):
    exit_code = 5


class MaskGenerationError(JPGNetError, RuntimeError):
    exit_code = 5

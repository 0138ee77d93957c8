"""Exception types for file persistence and configuration handling."""


class PersistenceError(Exception):
    """Base class for errors raised while reading the package's file formats."""


class FileFormatError(PersistenceError):
    """Magic bytes or structural content do not match the expected format."""


class TruncatedFileError(PersistenceError):
    """The file ended before the declared payload was fully read."""


class UnsupportedVersionError(PersistenceError):
    """The file declares a format version this build cannot read."""


class ConfigError(Exception):
    """Invalid, unknown, or unparsable configuration key/value."""

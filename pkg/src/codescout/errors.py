"""Exception types shared across the package."""

from __future__ import annotations


class CodeScoutError(Exception):
    """Base class for every error raised by this package."""


class RootNotFound(CodeScoutError):
    """The repository root does not exist or is not a directory."""


class PathOutsideSnapshot(CodeScoutError):
    """A tool was pointed at a path that escapes the snapshot root."""


class PathNotFound(CodeScoutError):
    """A tool was pointed at a path the snapshot does not contain."""


class InvalidPattern(CodeScoutError):
    """A search pattern failed to compile."""


class UnknownUnit(CodeScoutError):
    """A unit id was referenced that the snapshot does not define."""


class ProviderUnavailable(CodeScoutError):
    """The embedding provider could not be reached after a retry."""


class ReasonerUnavailable(CodeScoutError):
    """The reasoner backend could not be reached after a retry."""


class MalformedAfterRetry(CodeScoutError):
    """The reasoner returned an invalid response twice in a row."""


class ScriptExhausted(CodeScoutError):
    """A strict scripted reasoner ran out of canned responses."""


class SchemaError(CodeScoutError):
    """A request or response payload does not match its role schema."""


class ConfigError(CodeScoutError):
    """A config file contains unknown keys or out-of-range values."""


class IndexMissing(CodeScoutError):
    """No persisted index was found where one was expected."""


class StaleIndex(CodeScoutError):
    """A persisted index no longer matches the repository content."""


class IndexCorrupt(CodeScoutError):
    """A persisted index file does not match its recorded digest."""

"""Exception taxonomy shared across the pipeline.

Every error carries an exit code class so the CLI can map failures onto the
documented process exit codes: 2 = configuration, 3 = data, 4 = endpoint,
5 = internal.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ENDPOINT = 4
EXIT_INTERNAL = 5


class CotsiftError(Exception):
    """Base class for all typed pipeline errors."""

    exit_code = EXIT_INTERNAL


class ConfigError(CotsiftError):
    exit_code = EXIT_CONFIG


class BadConfig(ConfigError):
    pass


class BadCommand(ConfigError):
    pass


class UnwritablePath(ConfigError):
    pass


class DataError(CotsiftError):
    exit_code = EXIT_DATA


class MalformedJson(DataError):
    pass


class MissingField(DataError):
    pass


class UnclosedThink(DataError):
    pass


class DuplicateId(DataError):
    pass


class NoJsonFound(DataError):
    pass


class MissingVerbosity(DataError):
    pass


class UnparseableVerdict(DataError):
    pass


class MissingVerdict(DataError):
    pass


class KTooLarge(DataError):
    pass


class NTooLarge(DataError):
    pass


class EmptyThink(DataError):
    pass


class EmptyAnswer(DataError):
    pass


class EndpointError(CotsiftError):
    exit_code = EXIT_ENDPOINT


class JudgeUnavailable(EndpointError):
    pass


class EmbeddingUnavailable(EndpointError):
    pass


class DimMismatch(EndpointError):
    pass


class FailureThresholdExceeded(EndpointError):
    """Raised when the per-record failure rate can no longer stay under the
    configured threshold, even if every remaining request succeeds."""

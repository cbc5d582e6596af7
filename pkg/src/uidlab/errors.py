"""Exception types shared across the toolkit.

Every error raised intentionally by uidlab derives from UidlabError, so
callers (notably the CLI) can tell expected failure modes from bugs.
"""

from __future__ import annotations


class UidlabError(Exception):
    """Base class for all toolkit errors."""


# --- surprisal measures ---------------------------------------------------


class SequenceTooShort(UidlabError):
    """The measure needs more tokens than the sequence has."""


class DegenerateInput(UidlabError):
    """The input makes the measure undefined (e.g. zero mean surprisal)."""


class MissingCorpusStats(UidlabError):
    """A corpus-level statistic was required but not supplied."""


class InvalidExponent(UidlabError):
    """The power parameter is outside the measure's valid range."""


class EmptyCorpus(UidlabError):
    """No tokens were available to estimate a model from."""


# --- paired statistics ----------------------------------------------------


class ZeroVariance(UidlabError):
    """A correlation or fit is undefined because one series is constant."""


class UnpairedId(UidlabError):
    """Ids present in one group but missing from the other."""

    def __init__(self, missing: list[str] | tuple[str, ...], message: str | None = None):
        self.missing = tuple(missing)
        super().__init__(message or f"unpaired ids: {', '.join(self.missing)}")


# --- string metrics -------------------------------------------------------


class EmptyInput(UidlabError):
    """A metric received an empty hypothesis or reference."""


class TooFewCandidates(UidlabError):
    """The candidate pool is too small for the requested operation."""


# --- genetic decoding -----------------------------------------------------


class EmptyPool(UidlabError):
    """No candidates or no mutation tokens to draw from."""


class UnevaluatedFitness(UidlabError):
    """Selection touched a candidate whose fitness was never evaluated."""


class ScorerUnavailable(UidlabError):
    """A fitness component references a metric id with no implementation."""


class MissingReference(UidlabError):
    """A reference-based component was asked to score without references."""


class LengthMismatch(UidlabError):
    """Parallel score lists have different lengths."""


# --- external scorer transport --------------------------------------------


class SpawnFailure(UidlabError):
    """The scorer process or endpoint could not be started or reached."""


class HandshakeMismatch(UidlabError):
    """The scorer announced a protocol this client does not speak."""


class ProtocolError(UidlabError):
    """The scorer sent something outside the wire contract."""

    def __init__(self, message: str, line: str | None = None):
        self.line = line
        super().__init__(message if line is None else f"{message}: {line!r}")


class ScorerCrashed(UidlabError):
    """The scorer process exited while requests were in flight."""


class Timeout(UidlabError):
    """The scorer did not answer within the allotted time."""


class SchemaError(UidlabError):
    """An endpoint response did not match the documented schema."""


# --- contrastive loss kernel ----------------------------------------------


class DimensionMismatch(UidlabError):
    """Embedding or parameter shapes do not line up."""


# --- file formats and configuration ---------------------------------------


class ParseError(UidlabError):
    """A data file line could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConfigError(UidlabError):
    """The run configuration is malformed or contains unknown keys."""

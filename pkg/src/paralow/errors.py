"""Exception types shared across the package.

Each class maps to one failure category so callers (and the CLI exit-code
table) can tell them apart.
"""


class ParalowError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ParalowError, ValueError):
    """A caller violated an operation's input contract."""


class VocabMismatchError(ParalowError):
    """Two models bound to one decoding run do not share a vocabulary."""


class ModelUnavailableError(ParalowError):
    """A remote model could not be reached (after retries)."""


class ProtocolViolationError(ParalowError):
    """A remote server's response failed a wire-protocol check."""


class DecodingStuckError(ParalowError):
    """Every candidate token has probability zero; no token can be selected."""


class OracleScaleError(ParalowError):
    """Input exceeds the size limits of the brute-force reference decoder."""

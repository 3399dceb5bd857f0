"""Exception types shared across the package."""


class SnipSearchError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SnipSearchError, ValueError):
    """Input data is missing, malformed, or out of range."""


class MalformedSourceError(InvalidInputError):
    """Java source text has unbalanced braces."""


class LabelError(InvalidInputError):
    """A relevance label file is inconsistent with the instances it labels."""


class ArtifactMismatchError(SnipSearchError):
    """Serialized artifacts were built from different corpora or formats."""


class EmptyQueryError(InvalidInputError):
    """A query has no terms left after preprocessing."""

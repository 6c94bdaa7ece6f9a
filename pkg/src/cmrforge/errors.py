"""Exception hierarchy shared across the toolkit."""


class CmrForgeError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(CmrForgeError, ValueError):
    """An argument violates an operation's precondition."""


class NiftiParseError(CmrForgeError):
    """A NIfTI-1 file could not be parsed.

    Carries the offending header field and byte offset where known.
    """

    def __init__(self, message, field=None, offset=None, path=None):
        detail = message
        if field is not None:
            detail += f" [field={field!r}"
            if offset is not None:
                detail += f", byte offset {offset}"
            detail += "]"
        if path is not None:
            detail += f" in {path}"
        super().__init__(detail)
        self.field = field
        self.offset = offset
        self.path = path


class ManifestError(CmrForgeError):
    """A manifest JSON file is malformed or violates the schema."""

    def __init__(self, message, json_path=None):
        if json_path is not None:
            message = f"{message} (at {json_path})"
        super().__init__(message)
        self.json_path = json_path


class ConfigurationError(CmrForgeError):
    """A pipeline/builder configuration is inconsistent or incomplete."""


class MissingStructureError(CmrForgeError):
    """A slice lacks the labels required for contour extraction."""


class DegenerateContourError(CmrForgeError):
    """A traced contour is too small to carry landmarks."""


class UndefinedMetricError(CmrForgeError):
    """A surface metric is undefined because a mask is empty."""

"""Exception types shared across the package."""


class StfError(Exception):
    """Base class for all stf errors."""


# --- sketch ingestion ---

class UndecodableImage(StfError):
    """Image bytes could not be decoded."""


class EmptySketch(StfError):
    """A sketch ended up with zero stroke pixels."""


class EmptyKeyframes(StfError):
    """A keyframe list was empty."""


class DuplicateIndex(StfError):
    """Two keyframes share the same frame index."""


class UnsortedIndices(StfError):
    """Keyframe indices are not strictly increasing."""


class IndexOutOfRange(StfError):
    """A frame index falls outside the clip."""


class MixedResolution(StfError):
    """Keyframes with differing resolutions were mixed."""


# --- tweening ---

class ResolutionMismatch(StfError):
    """Two rasters or fields of different resolutions were combined."""


class AlphaOutOfRange(StfError):
    """Blend factor outside [0, 1]."""


class EmptyResult(StfError):
    """Band extraction produced no stroke pixels."""

    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(message)
        self.frame_index = frame_index


# --- latents / attention ---

class InvalidFrameIndex(StfError):
    """Frame index below 1 in a 1-based context."""


class EmptyBatch(StfError):
    """An attention batch contained zero frames."""


class DimensionMismatch(StfError):
    """Attention tensor dimensions disagree."""


class NoAttentionSites(StfError):
    """A model exposed no self-attention sites to patch."""


# --- pipeline ---

class TokenLimitExceeded(StfError):
    """Prompt exceeds the text encoder window (strict mode only)."""


class ScheduleExhausted(StfError):
    """A timestep outside the sampling schedule was requested."""


class UnknownModel(StfError):
    """Model identifier could not be resolved to weights."""


# --- service / request documents ---

class ValidationError(StfError):
    """Request document failed validation; carries field-level messages.

    Each detail is {"field", "message"} plus an optional "code" naming the
    underlying error class (e.g. DuplicateIndex) for client-side mapping.
    """

    def __init__(self, details: list[dict[str, str]]):
        super().__init__("; ".join(f"{d['field']}: {d['message']}" for d in details))
        self.details = details

    @classmethod
    def single(cls, field: str, message: str, code: str | None = None) -> "ValidationError":
        detail = {"field": field, "message": message}
        if code:
            detail["code"] = code
        return cls([detail])

"""Exception hierarchy shared by all skypaste modules.

Everything derives from :class:`SkypasteError` so callers (and the CLI) can
catch toolkit failures with a single except clause. Validation-style errors
additionally subclass :class:`ValueError` to behave like ordinary Python
argument errors.
"""


class SkypasteError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SkypasteError, ValueError):
    """Base class for bad-argument / bad-data errors."""


# ---- geometry ----

class InvalidBoxError(ValidationError):
    """A box violates its construction invariants."""


class RectOutOfBoundsError(ValidationError):
    """A pixel rect does not fit inside the stated image dimensions."""


# ---- image processing ----

class EvenKernelError(ValidationError):
    """Kernel size must be an odd integer >= 1."""


class NonPositiveSigmaError(ValidationError):
    """Gaussian sigma must be > 0."""


class NoAlphaChannelError(ValidationError):
    """Operation requires an RGBA image."""


class GainOutOfRangeError(ValidationError):
    """Exposure gain outside the supported [0.25, 4.0] range."""


class ForegroundOutOfBoundsError(ValidationError):
    """Pasted foreground does not fit fully inside the background."""


class EmptyMaskError(SkypasteError):
    """Alpha mask has no pixel above the threshold."""


class BadThresholdsError(ValidationError):
    """Edge-detector thresholds must satisfy 0 <= low < high."""


# ---- compositing ----

class NoValidPlacementError(SkypasteError):
    """No origin exists that keeps the scaled foreground inside the background."""


class BatchItemError(SkypasteError):
    """A batch job failed on one item; carries the item index and the cause."""

    def __init__(self, item_index: int, cause: BaseException):
        super().__init__(f"item {item_index}: {cause}")
        self.item_index = item_index
        self.cause = cause


# ---- dataset I/O ----

class MalformedLineError(ValidationError):
    """A label/prediction line has the wrong arity or non-numeric fields."""


class ClassOutOfRangeError(ValidationError):
    """class_id outside [0, number of classes)."""


class CoordOutOfRangeError(ValidationError):
    """A normalized coordinate is outside [0, 1]."""


class MissingKeyError(ValidationError):
    """Required key absent from a data config file."""


class CountMismatchError(ValidationError):
    """Declared class count disagrees with the names list."""


class DanglingLabelError(SkypasteError):
    """A label file exists without a matching image."""


class UnreadableFileError(SkypasteError):
    """A dataset file could not be read or decoded."""


class NameCollisionError(SkypasteError):
    """Two items would be written to the same output path."""


# ---- evaluation ----

class BadTauError(ValidationError):
    """NMS overlap threshold must lie in [0, 1]."""


class NoGroundTruthError(SkypasteError):
    """Average precision is undefined for a class with zero ground truth."""


# ---- training ----

class EmptySplitError(ValidationError):
    """Training requires non-empty train and validation sets."""

"""Exception hierarchy shared across the package."""


class CowBarcodeError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(CowBarcodeError):
    """A record could not be decoded; the message names the offending field."""


class ValidationError(CowBarcodeError):
    """A decoded value violates a type invariant."""


class StreamOrderError(CowBarcodeError):
    """Frame indices or timestamps in a stream are not strictly increasing."""


class RenderError(CowBarcodeError):
    """A synthetic pose cannot be rendered (e.g. every keypoint off-frame)."""


class ScheduleError(CowBarcodeError):
    """A walk schedule is invalid (overlap, reversed interval, bad ordering)."""


class AlignmentError(CowBarcodeError):
    """Template alignment failed for a frame (degenerate source triangle)."""


class EncodeError(CowBarcodeError):
    """Barcode encoding failed (e.g. empty body mask)."""


class EnrollmentError(CowBarcodeError):
    """A clip contains no enrollable frame."""


class ConflictError(CowBarcodeError):
    """An entry with the same id already exists in the catalog."""


class CatalogError(CowBarcodeError):
    """Catalog manipulation or persistence failed (missing id, mismatch)."""


class CatalogVersionError(CatalogError):
    """A catalog file declares an unsupported format version."""


class NoEvidenceError(CowBarcodeError):
    """Every frame of a clip was skipped; no identity decision is possible."""

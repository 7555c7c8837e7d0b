"""Exception types shared across the package."""


class FundusnetError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(FundusnetError, ValueError):
    """Tensor rank/dimension mismatch; the message names the offending dimension."""


class DataFormatError(FundusnetError, ValueError):
    """Malformed label file, manifest, or dataset inconsistency."""


class ImageDecodeError(FundusnetError, ValueError):
    """Bytes could not be decoded into an RGB image."""


class EvaluationError(FundusnetError, ValueError):
    """Invalid input to a metric computation (length mismatch, empty slice, ...)."""


class SingleClassError(EvaluationError):
    """ROC/AUROC requested for a slice containing only one class."""


class WeightsFileError(FundusnetError, ValueError):
    """Base class for weights/checkpoint container problems."""


class BadMagicError(WeightsFileError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(WeightsFileError):
    """File carries an unsupported format version."""


class ChecksumError(WeightsFileError):
    """Integrity checksum does not match the file contents."""


class FingerprintMismatchError(WeightsFileError):
    """Stored parameters do not belong to the expected model configuration."""


class CorruptFileError(WeightsFileError):
    """File is truncated or structurally inconsistent."""


class TrainingDivergedError(FundusnetError, RuntimeError):
    """Training produced a non-finite loss; the message lists the offending batch ids."""

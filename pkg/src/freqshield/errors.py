"""Exception hierarchy shared across the toolkit."""


class FreqShieldError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(FreqShieldError):
    """Non-finite or otherwise unusable numeric input."""


class ParameterError(FreqShieldError):
    """Out-of-range or inconsistent parameter (sigma, sizes, probabilities...)."""


class ShapeError(FreqShieldError):
    """Array shapes incompatible with the requested operation."""


class ColorspaceError(FreqShieldError):
    """Image carries the wrong colorspace tag for this operation."""


class SpectralAsymmetryError(FreqShieldError):
    """Inverse FFT of a spectrum that is not conjugate-symmetric enough to be real."""


class FormatError(FreqShieldError):
    """Malformed file on disk (dataset binaries, sidecars)."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (at byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class CapacityError(FreqShieldError):
    """Poison budget exceeds what the target class can supply."""


class ContractError(FreqShieldError):
    """Caller violated an operation contract (e.g. mask zeroing the DC term)."""


class DegenerateInputError(FreqShieldError):
    """Input that makes the operation ill-defined (e.g. zero-norm embedding)."""


class TrainingError(FreqShieldError):
    """Training diverged; message names the offending epoch."""

"""
Custom exception hierarchy for the joint image-mask diffusion lab.
Provides semantic error types so the CLI can map failures to exit codes.
"""
from typing import Optional, Sequence


class DiffusionLabException(Exception):
    """Base exception for all diffusion lab errors."""

    def __init__(self, message: str, details: Optional[str] = None):
        self.message = message
        self.details = details
        super().__init__(self.message)


# ============== Validation Exceptions ==============

class ValidationError(DiffusionLabException):
    """Base exception for invalid inputs and configurations (exit code 1)."""
    pass


class ConfigurationError(ValidationError):
    """Raised when a configuration value is invalid or inconsistent."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        message = f"Invalid configuration for '{field}': {reason}"
        super().__init__(message, reason)


class ShapeError(ValidationError):
    """Raised when array shapes do not match the expected layout."""

    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        message = f"Shape mismatch for {what}: expected {expected}, got {actual}"
        super().__init__(message)


class RangeError(ValidationError):
    """Raised when a scalar argument falls outside its valid range."""

    def __init__(self, name: str, value, valid: str):
        self.name = name
        self.value = value
        message = f"{name}={value} is out of range ({valid})"
        super().__init__(message, valid)


class UsageError(ValidationError):
    """Raised when a command or call is missing a mandatory argument."""
    pass


class DegenerateInputError(ValidationError):
    """Raised when an input carries no usable information (e.g. a constant image)."""
    pass


class DataLeakageError(ValidationError):
    """Raised when the same subject appears in both training and validation splits."""

    def __init__(self, subjects: Sequence[str]):
        self.subjects = sorted(subjects)
        message = f"Subjects present in both splits: {', '.join(self.subjects)}"
        super().__init__(message)


# ============== Numeric Exceptions ==============

class NumericError(DiffusionLabException):
    """Base exception for numerical failures."""
    pass


class SingularityError(NumericError):
    """Raised when a parameterization inversion divides by zero."""

    def __init__(self, conversion: str, timestep: int):
        self.conversion = conversion
        self.timestep = timestep
        message = f"{conversion} is singular at t={timestep}"
        super().__init__(message)


class NonFiniteError(NumericError):
    """Raised when an array that must be finite contains NaN or inf."""

    def __init__(self, what: str):
        self.what = what
        message = f"Non-finite values in {what}"
        super().__init__(message)


class NonFiniteLossError(NumericError):
    """Raised when the training loss becomes NaN or inf."""

    def __init__(self, step: int, timesteps: Sequence[int]):
        self.step = step
        self.timesteps = list(timesteps)
        message = f"Non-finite loss at optimizer step {step}"
        super().__init__(message, f"timesteps in batch: {self.timesteps}")


# ============== Data Access Exceptions ==============

class DataAccessError(DiffusionLabException):
    """Base exception for archive and checkpoint I/O errors."""
    pass


class ArchiveParseError(DataAccessError):
    """Raised when a manifest line cannot be parsed."""

    def __init__(self, path: str, line: int, field: Optional[str], reason: str):
        self.path = path
        self.line = line
        self.field = field
        self.reason = reason
        location = f"line {line}" + (f", field '{field}'" if field else "")
        message = f"Cannot parse manifest '{path}' at {location}: {reason}"
        super().__init__(message, reason)


class ArchiveIntegrityError(DataAccessError):
    """Raised when a payload file does not match its manifest entry."""

    def __init__(self, record: str, reason: str):
        self.record = record
        self.reason = reason
        message = f"Payload integrity failure for record '{record}': {reason}"
        super().__init__(message, reason)


class ArchiveVersionError(DataAccessError):
    """Raised when a manifest declares an unsupported format version."""

    def __init__(self, version, supported: int):
        self.version = version
        message = f"Unsupported archive version {version} (supported: {supported})"
        super().__init__(message)


class ArchiveValidationError(DataAccessError):
    """Raised when manifest entries violate archive rules (e.g. duplicates)."""
    pass


class CheckpointError(DataAccessError):
    """Raised when a checkpoint file is malformed or incompatible."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        message = f"Invalid checkpoint '{path}': {reason}"
        super().__init__(message, reason)

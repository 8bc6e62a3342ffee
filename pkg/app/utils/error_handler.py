# app/utils/error_handler.py

from app.utils.logging_utils import logger

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DualCamError(Exception):
    """Base class for pipeline errors. `exit_code` is what the CLI returns."""
    exit_code = EXIT_DATA


class ConfigError(DualCamError):
    """Raised for unknown config keys, bad flag values or malformed config files."""
    exit_code = EXIT_USAGE


class ShapeError(DualCamError):
    """Raised when array dimensions do not agree."""
    pass


class ParameterError(DualCamError):
    """Raised when a scalar parameter is outside its valid range."""
    pass


class NumericError(DualCamError):
    """Raised when a computation produces NaN/Inf values."""
    exit_code = EXIT_NUMERIC


class FormatError(DualCamError):
    """Raised when an image/PFM/checkpoint file cannot be decoded."""
    pass


class EstimationError(DualCamError):
    """Raised when a homography cannot be estimated from the correspondences."""
    pass


class DatasetError(DualCamError):
    """Raised when a dataset directory or manifest is incomplete or invalid."""
    pass


class StageOrderError(DualCamError):
    """Raised when a training stage is requested before its predecessor's checkpoint exists."""
    pass


def handle_exception(exc: Exception, context: str = "Unknown") -> int:
    """
    Logs the exception and maps it to a process exit code.
    Can be used in CLI commands or scripts.
    """
    logger.error(f"[{context}] {type(exc).__name__}: {str(exc)}")
    if isinstance(exc, DualCamError):
        return exc.exit_code
    if isinstance(exc, (OSError, ValueError)):
        return EXIT_DATA
    if isinstance(exc, (FloatingPointError, OverflowError, ZeroDivisionError)):
        return EXIT_NUMERIC
    return EXIT_DATA

import logging
from logging import Logger

ROOT_LOGGER_NAME = "dualcam"


def get_logger(name: str = ROOT_LOGGER_NAME, level: int = logging.INFO) -> Logger:
    """
    Returns a configured logger instance.
    Logs to console with format: [timestamp] [LEVEL] message
    Avoids adding duplicate handlers if re-imported.

    Module loggers ("align", "fusion.trainer", ...) are created as children of
    the project logger so they share its single console handler.

    Args:
        name (str): Logger name (default: "dualcam"). Short names are prefixed.
        level (int): Logging level (default: logging.INFO).
    """
    if name != ROOT_LOGGER_NAME and not name.startswith(ROOT_LOGGER_NAME + "."):
        name = f"{ROOT_LOGGER_NAME}.{name}"

    root = logging.getLogger(ROOT_LOGGER_NAME)

    # Prevent duplicate handlers
    if not root.handlers:
        root.setLevel(level)

        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)

        # Format: [2025-06-01 10:00:00] [INFO] Message
        formatter = logging.Formatter(
            "[%(asctime)s] [%(levelname)s] %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )
        console_handler.setFormatter(formatter)

        root.addHandler(console_handler)
        root.propagate = False  # Prevent double logging if root handler exists

    return logging.getLogger(name)


def set_level(level: int) -> None:
    """Adjusts the project logger and its console handler together."""
    root = get_logger()
    root.setLevel(level)
    for handler in root.handlers:
        handler.setLevel(level)


# ✅ Global logger used throughout the app
logger = get_logger()

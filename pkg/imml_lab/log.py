"""
Log sinks shared by the command line and the laboratory.

Records carry a ``run`` extra (``experiment/seed=N`` inside
``Laboratory.run``, ``-`` elsewhere). The console sink writes one line per
record to stderr so stdout stays free for JSON reports; the optional file
sink writes one JSON object per record.
"""
import sys

from loguru import logger

CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <7}</level> | "
    "<magenta>{extra[run]}</magenta> | <cyan>{name}:{function}</cyan> - {message}"
)


def setup_logging(level: str = "INFO", log_path: str = "") -> None:
    logger.remove()
    logger.configure(extra={"run": "-"})

    logger.add(sys.stderr, level=level, format=CONSOLE_FORMAT, colorize=True, backtrace=False, diagnose=False)

    if log_path:
        try:
            logger.add(log_path, level=level, serialize=True, rotation="20 MB", retention=5, enqueue=True)
        except (ValueError, OSError) as e:
            logger.error(f"Cannot write the run log to '{log_path}': {e}")

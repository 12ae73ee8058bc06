"""
Root-logger setup for the CLI and for per-run log files.
"""
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

CONSOLE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

LOG_FILE_MAX_BYTES = 10 * 1024 * 1024
LOG_FILE_BACKUPS = 5

# Quieted to WARNING; they log per-tensor or per-plugin at INFO
NOISY_LOGGERS = ('matplotlib', 'PIL', 'numexpr', 'torch.distributed')


class ColoredFormatter(logging.Formatter):
    """ANSI-colors the level and logger name of console records."""

    LEVEL_COLORS = {
        logging.DEBUG: '36',
        logging.INFO: '32',
        logging.WARNING: '33',
        logging.ERROR: '31',
        logging.CRITICAL: '35',
    }
    NAME_COLOR = '94'

    @staticmethod
    def _paint(text: str, code: str) -> str:
        return f"\033[{code}m{text}\033[0m"

    def format(self, record: logging.LogRecord) -> str:
        # file handlers see the same record; color a copy only
        shown = logging.makeLogRecord(record.__dict__)
        shown.levelname = self._paint(record.levelname, self.LEVEL_COLORS.get(record.levelno, '0'))
        shown.name = self._paint(record.name, self.NAME_COLOR)
        return super().format(shown)


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    log_dir: Optional[Path] = None,
    use_color: Optional[bool] = None
) -> None:
    """
    Replace the root logger's handlers with a stdout handler and, when
    ``log_file`` is given, a rotating file handler.

    Args:
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL; unknown names mean INFO
        log_file: File name for the rotating handler
        log_dir: Directory of ``log_file``, created if missing
        use_color: Color console output; None colors only when stdout is a TTY
    """
    level = getattr(logging, log_level.upper(), logging.INFO)
    colored = sys.stdout.isatty() if use_color is None else use_color
    formatter_cls = ColoredFormatter if colored else logging.Formatter

    root = logging.getLogger()
    root.setLevel(level)
    root.handlers.clear()

    console = logging.StreamHandler(sys.stdout)
    console.setLevel(level)
    console.setFormatter(formatter_cls(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
    root.addHandler(console)

    if log_file:
        add_file_handler(log_file, log_dir, level)

    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def add_file_handler(
    log_file: str,
    log_dir: Optional[Path] = None,
    level: int = logging.INFO,
    formatter: Optional[logging.Formatter] = None
) -> Path:
    """
    Attach a rotating file handler to the root logger and return its path.

    Training runs call this with their run directory so ``train.log`` sits
    next to the checkpoints.
    """
    if log_dir:
        log_dir.mkdir(parents=True, exist_ok=True)
    log_path = (log_dir / log_file) if log_dir else Path(log_file)

    handler = RotatingFileHandler(log_path, maxBytes=LOG_FILE_MAX_BYTES, backupCount=LOG_FILE_BACKUPS)
    handler.setLevel(level)
    handler.setFormatter(formatter or logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
    logging.getLogger().addHandler(handler)
    return log_path


def remove_file_handler(log_path: Path) -> None:
    """Detach and close the file handler writing to ``log_path``, if any."""
    root = logging.getLogger()
    target = log_path.resolve()
    for handler in list(root.handlers):
        if isinstance(handler, RotatingFileHandler) and Path(handler.baseFilename) == target:
            root.removeHandler(handler)
            handler.close()

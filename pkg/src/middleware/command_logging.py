"""
Command logging for the CLI.
"""
import functools
import logging
import time
from typing import Callable

from src.exceptions import ValidationError

logger = logging.getLogger(__name__)


def log_command(name: str) -> Callable[[Callable[..., int]], Callable[..., int]]:
    """
    Decorator logging ``→ <command>`` on entry and
    ``← <command> <status> (<ms>)`` on exit.

    The wrapped handler returns an exit code; 0 logs at INFO, other codes
    at WARNING and exceptions at ERROR before being re-raised.
    """
    def decorator(handler: Callable[..., int]) -> Callable[..., int]:
        @functools.wraps(handler)
        def wrapper(*args, **kwargs) -> int:
            start_time = time.time()
            logger.info(f"→ {name}")
            try:
                code = handler(*args, **kwargs)
            except ValidationError as e:
                duration = (time.time() - start_time) * 1000
                logger.warning(f"← {name} INVALID ({duration:.2f}ms): {e.message}")
                raise
            except Exception as e:
                duration = (time.time() - start_time) * 1000
                logger.error(f"← {name} ERROR ({duration:.2f}ms): {str(e)}")
                raise
            duration = (time.time() - start_time) * 1000
            if code == 0:
                logger.info(f"← {name} 0 ({duration:.2f}ms)")
            else:
                logger.warning(f"← {name} {code} ({duration:.2f}ms)")
            return code
        return wrapper
    return decorator

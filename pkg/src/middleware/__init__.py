"""
Middleware package initialization.
"""
from .command_logging import log_command

__all__ = ["log_command"]

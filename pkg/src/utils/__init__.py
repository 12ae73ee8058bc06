"""
Utility helpers: logging configuration and atomic file operations.
"""
from src.utils.file_operations import FileOperations
from src.utils.logging_config import add_file_handler, remove_file_handler, setup_logging

__all__ = ['FileOperations', 'setup_logging', 'add_file_handler', 'remove_file_handler']

"""
Database package initialization.
"""
from .run_store import DONE, FAILED, PENDING, RUN_INDEX_FILE, RUNNING, RunStore, cell_key

__all__ = ["RunStore", "cell_key", "RUN_INDEX_FILE", "PENDING", "RUNNING", "DONE", "FAILED"]

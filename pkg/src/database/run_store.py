"""
Persistent index of sweep cells.

Each cell (target, p, replica) carries a status, its run directory and the
last error. The index is written to ``runs.json`` after every change so an
interrupted sweep can resume by skipping finished cells.
"""
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional
import logging

from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

RUN_INDEX_FILE = "runs.json"

PENDING = "pending"
RUNNING = "running"
DONE = "done"
FAILED = "failed"
STATUSES = (PENDING, RUNNING, DONE, FAILED)


def cell_key(target: str, p: float, replica: int) -> str:
    """Stable cell identifier, e.g. ``x0-p2.0-r1``."""
    return f"{target}-p{float(p)}-r{replica}"


class RunStore:
    """Cell index with persistence to ``<sweep_dir>/runs.json``."""

    def __init__(self, index_file: Path):
        self.index_file = Path(index_file)
        self._cells: Dict[str, dict] = {}
        self._load()

    def _load(self):
        """Load the index from disk if present."""
        data = FileOperations.read_json_with_lock(self.index_file)
        if data:
            self._cells = data.get("cells", {})
            logger.info(f"Loaded {len(self._cells)} sweep cells from {self.index_file}")
        else:
            logger.debug(f"No run index at {self.index_file}")

    def _save(self):
        data = {
            "cells": self._cells,
            "last_updated": datetime.now(timezone.utc).isoformat()
        }
        if not FileOperations.write_json_with_lock(self.index_file, data):
            logger.error(f"Failed to save run index {self.index_file}")

    def register(self, target: str, p: float, replica: int, seed: int, run_dir: Path) -> dict:
        """Add a cell as pending unless it is already known."""
        key = cell_key(target, p, replica)
        if key not in self._cells:
            self._cells[key] = {
                "key": key,
                "target": target,
                "p": float(p),
                "replica": replica,
                "seed": seed,
                "run_dir": str(run_dir),
                "status": PENDING,
                "error": None,
            }
            self._save()
        return self._cells[key]

    def get(self, key: str) -> Optional[dict]:
        return self._cells.get(key)

    def all_cells(self) -> List[dict]:
        return sorted(self._cells.values(), key=lambda c: (c["target"], c["p"], c["replica"]))

    def by_status(self, status: str) -> List[dict]:
        return [c for c in self.all_cells() if c["status"] == status]

    def set_status(self, key: str, status: str, error: Optional[str] = None) -> dict:
        """Update a cell's status; errors are cleared unless given."""
        if status not in STATUSES:
            raise ValueError(f"unknown status '{status}'")
        cell = self._cells[key]
        cell["status"] = status
        cell["error"] = error
        cell["updated_at"] = datetime.now(timezone.utc).isoformat()
        self._save()
        return cell

    def is_done(self, key: str) -> bool:
        cell = self._cells.get(key)
        return bool(cell and cell["status"] == DONE)

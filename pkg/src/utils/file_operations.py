"""
Atomic, lock-aware file I/O for run directories, archives and checkpoints.

Writers go through a temporary sibling and ``Path.replace`` so an interrupted
process leaves either the old file or the new one, never a torn one. The
sweep index is shared between worker processes and is read and written under
``flock``.
"""
import fcntl
import hashlib
import json
import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, Iterator, Optional, TypeVar
import logging

logger = logging.getLogger(__name__)

T = TypeVar("T")


@contextmanager
def _flocked(handle, mode: int) -> Iterator[None]:
    fcntl.flock(handle.fileno(), mode)
    try:
        yield
    finally:
        fcntl.flock(handle.fileno(), fcntl.LOCK_UN)


def _with_retries(action: Callable[[], T], what: str, attempts: int, delay: float) -> Optional[T]:
    """Run ``action`` until it stops raising OSError; None once attempts run out."""
    for attempt in range(1, attempts + 1):
        try:
            return action()
        except OSError as e:
            if attempt == attempts:
                logger.error(f"Giving up on {what} after {attempts} attempts: {e}")
                return None
            logger.warning(f"{what} failed (attempt {attempt}/{attempts}), retrying")
            time.sleep(delay)
    return None


class FileOperations:
    """Static helpers; no state lives on the class."""

    @staticmethod
    def read_json_with_lock(
        file_path: Path,
        max_retries: int = 3,
        retry_delay: float = 0.1
    ) -> Optional[Dict]:
        """
        Load a JSON document under a shared lock.

        Args:
            file_path: Document to read
            max_retries: Attempts on transient OS errors
            retry_delay: Seconds between attempts

        Returns:
            The parsed document, or None when it is missing, unreadable or
            not valid JSON
        """
        if not file_path.exists():
            return None

        def load() -> Optional[Dict]:
            with open(file_path, 'r', encoding='utf-8') as handle, _flocked(handle, fcntl.LOCK_SH):
                try:
                    return json.load(handle)
                except json.JSONDecodeError as e:
                    logger.error(f"{file_path} is not valid JSON: {e}")
                    return None

        return _with_retries(load, f"reading {file_path}", max_retries, retry_delay)

    @staticmethod
    def write_json_with_lock(
        file_path: Path,
        data: Dict,
        max_retries: int = 5,
        retry_delay: float = 0.2,
        indent: int = 2
    ) -> bool:
        """
        Serialize ``data`` with sorted keys and replace ``file_path`` atomically
        while holding an exclusive lock on the temporary file.

        Returns:
            Whether the document was written
        """
        payload = json.dumps(data, indent=indent, sort_keys=True).encode("utf-8")

        def store() -> bool:
            FileOperations.write_bytes_atomic(file_path, payload, lock=True)
            return True

        return bool(_with_retries(store, f"writing {file_path}", max_retries, retry_delay))

    @staticmethod
    def write_bytes_atomic(file_path: Path, payload: bytes, lock: bool = False) -> None:
        """
        Write ``payload`` to a pid-suffixed temporary sibling, fsync it and
        rename it over ``file_path``. OSError propagates to the caller.
        """
        file_path.parent.mkdir(parents=True, exist_ok=True)
        staging = file_path.with_name(f".{file_path.name}.{os.getpid()}.tmp")
        with open(staging, 'wb') as handle:
            if lock:
                fcntl.flock(handle.fileno(), fcntl.LOCK_EX)
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        # closing the handle drops the lock
        staging.replace(file_path)
        logger.debug(f"{file_path}: {len(payload)} bytes")

    @staticmethod
    def write_text_atomic(file_path: Path, text: str) -> None:
        FileOperations.write_bytes_atomic(file_path, text.encode("utf-8"))

    @staticmethod
    def sha256_file(file_path: Path, chunk_size: int = 1 << 20) -> str:
        """Hex sha256 of one file, streamed in ``chunk_size`` reads."""
        digest = hashlib.sha256()
        with open(file_path, 'rb') as handle:
            for chunk in iter(lambda: handle.read(chunk_size), b""):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def sha256_tree(directory: Path, pattern: str = "*") -> str:
        """
        Hex sha256 over the files below ``directory`` that match ``pattern``.

        Each file contributes its relative path and its own digest, in sorted
        path order, so the result is independent of filesystem listing order.
        """
        digest = hashlib.sha256()
        for path in sorted(p for p in directory.rglob(pattern) if p.is_file()):
            digest.update(str(path.relative_to(directory)).encode("utf-8"))
            digest.update(FileOperations.sha256_file(path).encode("ascii"))
        return digest.hexdigest()

    @staticmethod
    def ensure_directory(directory: Path) -> bool:
        """Create ``directory`` with its parents; False if the OS refuses."""
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Cannot create {directory}: {e}")
            return False
        return True

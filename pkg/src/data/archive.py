"""
Slice archive: a directory holding ``manifest.jsonl`` and one raw
little-endian float32 payload file per channel per slice.

The first manifest line is the header::

    {"format": "jdiff-slices", "version": 1, "n_z": 30, "height": 32, "width": 32,
     "provenance": {...}}

Every following line is one record::

    {"subject_id": "toy-003", "z_index": 5, "z_total": 16, "z_bin": 9,
     "pathology": 1, "image": "payloads/000042_image.f32",
     "mask": "payloads/000042_mask.f32", "token": 39}

``token`` is only present on generated samples.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from src.data.normalization import compute_z_bin
from src.exceptions import (
    ArchiveIntegrityError,
    ArchiveParseError,
    ArchiveValidationError,
    ArchiveVersionError,
    RangeError,
)
from src.models import SliceRecord
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

ARCHIVE_FORMAT = "jdiff-slices"
ARCHIVE_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
PAYLOAD_DIR = "payloads"

RECORD_FIELDS: Dict[str, type] = {
    "subject_id": str,
    "z_index": int,
    "z_total": int,
    "z_bin": int,
    "pathology": int,
    "image": str,
    "mask": str,
}


@dataclass
class ArchiveHeader:
    """Archive-level metadata."""

    n_z: int
    height: int
    width: int
    provenance: Dict[str, Any] = field(default_factory=dict)
    version: int = ARCHIVE_VERSION

    def to_json(self) -> Dict[str, Any]:
        payload = {
            "format": ARCHIVE_FORMAT,
            "version": self.version,
            "n_z": self.n_z,
            "height": self.height,
            "width": self.width,
        }
        if self.provenance:
            payload["provenance"] = self.provenance
        return payload


@dataclass
class SliceArchive:
    """Header plus fully loaded records."""

    header: ArchiveHeader
    records: List[SliceRecord]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest record before its payloads are read."""

    line: int
    subject_id: str
    z_index: int
    z_total: int
    z_bin: int
    pathology: int
    image: str
    mask: str
    token: Optional[int] = None

    @property
    def key(self) -> Tuple[str, int]:
        return (self.subject_id, self.z_index)

    @property
    def label(self) -> str:
        return f"{self.subject_id}@z{self.z_index}"


def _field(obj: Dict[str, Any], name: str, kind: type, path: Path, line: int) -> Any:
    if name not in obj:
        raise ArchiveParseError(str(path), line, name, "missing field")
    value = obj[name]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ArchiveParseError(str(path), line, name, f"expected integer, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise ArchiveParseError(str(path), line, name, f"expected string, got {value!r}")
    return value


def _parse_header(obj: Any, path: Path) -> ArchiveHeader:
    if not isinstance(obj, dict):
        raise ArchiveParseError(str(path), 1, None, "header must be an object")
    if obj.get("format") != ARCHIVE_FORMAT:
        raise ArchiveParseError(str(path), 1, "format", f"expected '{ARCHIVE_FORMAT}'")
    version = obj.get("version")
    if version != ARCHIVE_VERSION:
        raise ArchiveVersionError(version, ARCHIVE_VERSION)
    n_z = _field(obj, "n_z", int, path, 1)
    height = _field(obj, "height", int, path, 1)
    width = _field(obj, "width", int, path, 1)
    if n_z < 1 or height < 1 or width < 1:
        raise ArchiveParseError(str(path), 1, None, "n_z, height and width must be positive")
    provenance = obj.get("provenance") or {}
    if not isinstance(provenance, dict):
        raise ArchiveParseError(str(path), 1, "provenance", "must be an object")
    return ArchiveHeader(n_z=n_z, height=height, width=width, provenance=provenance, version=version)


def read_manifest(path: Path) -> Tuple[ArchiveHeader, List[ManifestEntry]]:
    """
    Parse and validate the manifest without touching payloads.

    Raises:
        ArchiveParseError: Malformed JSON or fields (reports line and field)
        ArchiveVersionError: Unknown version
        ArchiveValidationError: Duplicate (subject_id, z_index) or inconsistent z_bin
    """
    path = Path(path)
    manifest = path / MANIFEST_NAME
    if not manifest.is_file():
        raise ArchiveParseError(str(manifest), 0, None, "manifest not found")

    header: Optional[ArchiveHeader] = None
    entries: List[ManifestEntry] = []
    seen: Dict[Tuple[str, int], int] = {}
    with open(manifest, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ArchiveParseError(str(manifest), line_no, None, e.msg)
            if header is None:
                header = _parse_header(obj, manifest)
                continue
            if not isinstance(obj, dict):
                raise ArchiveParseError(str(manifest), line_no, None, "record must be an object")
            values = {name: _field(obj, name, kind, manifest, line_no) for name, kind in RECORD_FIELDS.items()}
            token = obj.get("token")
            if token is not None and (isinstance(token, bool) or not isinstance(token, int)):
                raise ArchiveParseError(str(manifest), line_no, "token", f"expected integer, got {token!r}")
            entry = ManifestEntry(line=line_no, token=token, **values)
            try:
                expected_bin = compute_z_bin(entry.z_index, entry.z_total, header.n_z)
            except RangeError as e:
                raise ArchiveParseError(str(manifest), line_no, "z_index", e.message)
            if entry.z_bin != expected_bin:
                raise ArchiveValidationError(
                    f"Record {entry.label} (line {line_no}) has z_bin {entry.z_bin}, expected {expected_bin}"
                )
            if entry.key in seen:
                raise ArchiveValidationError(
                    f"Duplicate record {entry.label} at lines {seen[entry.key]} and {line_no}"
                )
            seen[entry.key] = line_no
            entries.append(entry)

    if header is None:
        raise ArchiveParseError(str(manifest), 1, None, "empty manifest")
    return header, entries


def _read_payload(root: Path, relative: str, header: ArchiveHeader, label: str) -> np.ndarray:
    file_path = root / relative
    expected = header.height * header.width * 4
    if not file_path.is_file():
        raise ArchiveIntegrityError(label, f"payload {relative} is missing")
    size = file_path.stat().st_size
    if size != expected:
        raise ArchiveIntegrityError(label, f"payload {relative} has {size} bytes, expected {expected}")
    return np.fromfile(file_path, dtype="<f4").reshape(header.height, header.width).astype(np.float32)


def load_entry(root: Path, entry: ManifestEntry, header: ArchiveHeader) -> SliceRecord:
    """Read the payloads of one manifest entry into a SliceRecord."""
    image = _read_payload(root, entry.image, header, entry.label)
    mask = _read_payload(root, entry.mask, header, entry.label)
    try:
        return SliceRecord(
            subject_id=entry.subject_id,
            z_index=entry.z_index,
            z_total=entry.z_total,
            z_bin=entry.z_bin,
            pathology=entry.pathology,
            image=image,
            mask=mask,
            token=entry.token,
        )
    except PydanticValidationError as e:
        first = e.errors()[0]
        raise ArchiveValidationError(f"Record {entry.label} (line {entry.line}) is invalid: {first['msg']}")


def iter_archive(path: Path) -> Iterator[SliceRecord]:
    """Stream records one at a time; only the manifest is held in memory."""
    root = Path(path)
    header, entries = read_manifest(root)
    for entry in entries:
        yield load_entry(root, entry, header)


def read_archive(path: Path) -> SliceArchive:
    """
    Load a whole archive.

    Raises:
        ArchiveParseError, ArchiveVersionError, ArchiveValidationError,
        ArchiveIntegrityError
    """
    root = Path(path)
    header, entries = read_manifest(root)
    records = [load_entry(root, entry, header) for entry in entries]
    logger.info(f"Read {len(records)} slices from {root}")
    return SliceArchive(header=header, records=records)


def _payload_bytes(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(np.asarray(array, dtype="<f4")).tobytes(order="C")


def write_archive(
    path: Path,
    records: Sequence[SliceRecord],
    n_z: int,
    provenance: Optional[Dict[str, Any]] = None
) -> Path:
    """
    Write records as an archive directory.

    Payloads are written first and the manifest last, each atomically, so a
    reader never sees a manifest pointing at missing payloads.

    Args:
        path: Archive directory
        records: Slices to store (unique (subject_id, z_index), one H x W)
        n_z: Axial bin count recorded in the header
        provenance: Optional provenance block for the header

    Returns:
        Path of the manifest

    Raises:
        ArchiveValidationError: Duplicates, mixed shapes or inconsistent z_bin
    """
    root = Path(path)
    if not records:
        raise ArchiveValidationError("Refusing to write an empty archive")
    height, width = records[0].image.shape
    seen = set()
    for r in records:
        if r.key in seen:
            raise ArchiveValidationError(f"Duplicate record {r.subject_id}@z{r.z_index}")
        seen.add(r.key)
        if r.image.shape != (height, width):
            raise ArchiveValidationError(
                f"Record {r.subject_id}@z{r.z_index} has shape {r.image.shape}, archive uses {(height, width)}"
            )
        if r.z_bin != compute_z_bin(r.z_index, r.z_total, n_z):
            raise ArchiveValidationError(f"Record {r.subject_id}@z{r.z_index} has an inconsistent z_bin")

    payload_dir = root / PAYLOAD_DIR
    FileOperations.ensure_directory(payload_dir)
    header = ArchiveHeader(n_z=n_z, height=height, width=width, provenance=provenance or {})
    lines = [json.dumps(header.to_json(), sort_keys=True)]
    written = set()
    for i, r in enumerate(records):
        names = {}
        for channel, array in (("image", r.image), ("mask", r.mask)):
            relative = f"{PAYLOAD_DIR}/{i:06d}_{channel}.f32"
            FileOperations.write_bytes_atomic(root / relative, _payload_bytes(array))
            names[channel] = relative
            written.add(relative)
        entry = {
            "subject_id": r.subject_id,
            "z_index": r.z_index,
            "z_total": r.z_total,
            "z_bin": r.z_bin,
            "pathology": r.pathology,
            "image": names["image"],
            "mask": names["mask"],
        }
        if r.token is not None:
            entry["token"] = r.token
        lines.append(json.dumps(entry, sort_keys=True))

    for stale in payload_dir.glob("*.f32"):
        if f"{PAYLOAD_DIR}/{stale.name}" not in written:
            stale.unlink()

    manifest = root / MANIFEST_NAME
    FileOperations.write_text_atomic(manifest, "\n".join(lines) + "\n")
    logger.info(f"Wrote {len(records)} slices to {root}")
    return manifest

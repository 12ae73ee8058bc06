"""
Ingest pre-extracted 2-D slices into a slice archive.

The metadata table is a CSV with one row per slice::

    subject_id,z_index,z_total,image,mask[,pathology]

``image`` and ``mask`` are ``.npy`` paths relative to the table. Images are
percentile-normalized per slice; masks are binarized at ``> 0``. When the
``pathology`` column is present it is taken as given and a row whose mask
disagrees with it is rejected.
"""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError as PydanticValidationError

from src.data.archive import write_archive
from src.data.normalization import compute_z_bin, percentile_normalize
from src.exceptions import ArchiveParseError, ArchiveValidationError, DegenerateInputError
from src.models import SliceRecord

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["subject_id", "z_index", "z_total", "image", "mask"]


def _load_plane(path: Path, row: int, column: str, table: Path) -> np.ndarray:
    if not path.is_file():
        raise ArchiveParseError(str(table), row, column, f"file {path} not found")
    array = np.load(path)
    if array.ndim != 2:
        raise ArchiveParseError(str(table), row, column, f"expected a 2-D array, got shape {array.shape}")
    return array


def ingest_table(table: Path, n_z: int) -> List[SliceRecord]:
    """
    Read a metadata CSV and its payloads into normalized records.

    Args:
        table: Metadata CSV
        n_z: Number of axial bins

    Returns:
        Records in table order

    Raises:
        ArchiveParseError: Missing columns or unreadable payloads (row = CSV line)
        ArchiveValidationError: Inconsistent or degenerate rows
    """
    table = Path(table)
    frame = pd.read_csv(table, dtype={"subject_id": str})
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise ArchiveParseError(str(table), 1, missing[0], "missing column")
    has_pathology = "pathology" in frame.columns

    base = table.parent
    records: List[SliceRecord] = []
    for i, row in enumerate(frame.itertuples(index=False)):
        line = i + 2
        label = f"{row.subject_id}@z{row.z_index}"
        raw = _load_plane(base / str(row.image), line, "image", table)
        mask_raw = _load_plane(base / str(row.mask), line, "mask", table)
        try:
            image = percentile_normalize(raw)
        except DegenerateInputError as e:
            raise ArchiveValidationError(f"Row {line} ({label}): {e.message}")
        mask = np.where(mask_raw > 0, 1.0, -1.0).astype(np.float32)
        pathology = int(row.pathology) if has_pathology else int(bool(np.any(mask > 0)))
        try:
            records.append(SliceRecord(
                subject_id=str(row.subject_id),
                z_index=int(row.z_index),
                z_total=int(row.z_total),
                z_bin=compute_z_bin(int(row.z_index), int(row.z_total), n_z),
                pathology=pathology,
                image=image,
                mask=mask,
            ))
        except PydanticValidationError as e:
            raise ArchiveValidationError(f"Row {line} ({label}) is invalid: {e.errors()[0]['msg']}")
    logger.info(f"Ingested {len(records)} slices from {table}")
    return records


def ingest(table: Path, out_dir: Path, n_z: int, provenance: Optional[dict] = None) -> Path:
    """Ingest ``table`` and write the archive to ``out_dir``; returns the manifest path."""
    records = ingest_table(table, n_z)
    return write_archive(out_dir, records, n_z, provenance={"source": str(table), **(provenance or {})})

"""
Slice data: archives, normalization, splitting and the toy generator.
"""
from .archive import (
    ArchiveHeader,
    ManifestEntry,
    SliceArchive,
    iter_archive,
    read_archive,
    read_manifest,
    write_archive,
)
from .dataset import SliceTensors, records_to_tensors
from .ingest import ingest, ingest_table
from .normalization import compute_z_bin, percentile_normalize
from .split import assert_disjoint, subject_lesion_status, subject_split
from .toy import generate_toy_dataset

__all__ = [
    "ArchiveHeader",
    "ManifestEntry",
    "SliceArchive",
    "iter_archive",
    "read_archive",
    "read_manifest",
    "write_archive",
    "SliceTensors",
    "records_to_tensors",
    "ingest",
    "ingest_table",
    "compute_z_bin",
    "percentile_normalize",
    "assert_disjoint",
    "subject_lesion_status",
    "subject_split",
    "generate_toy_dataset",
]

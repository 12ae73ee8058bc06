"""
Data service: toy generation, ingestion and loading the configured slices.
"""
import logging
from pathlib import Path
from typing import List, Tuple

from src.data import generate_toy_dataset, ingest, read_archive, subject_split, write_archive
from src.exceptions import ConfigurationError
from src.models import ExperimentConfig, SliceRecord

logger = logging.getLogger(__name__)


class DataService:
    """Resolves the experiment's data source into slice records."""

    @staticmethod
    def generate_toy(cfg: ExperimentConfig, out_dir: Path) -> Path:
        """
        Write the configured toy dataset as an archive.

        Returns:
            Manifest path
        """
        records = generate_toy_dataset(cfg.toy, cfg.data.n_z)
        provenance = {
            "generator": "toy",
            "toy": cfg.toy.model_dump(mode="json"),
        }
        return write_archive(out_dir, records, cfg.data.n_z, provenance)

    @staticmethod
    def ingest(table: Path, out_dir: Path, n_z: int) -> Path:
        """Ingest a metadata table of ``.npy`` slices into an archive."""
        return ingest(table, out_dir, n_z)

    @staticmethod
    def load_records(cfg: ExperimentConfig) -> List[SliceRecord]:
        """
        Slices of the configured archive, or the toy dataset when no archive is set.

        Raises:
            ConfigurationError: Archive bins or slice size disagree with the config
        """
        if cfg.data.archive is None:
            return generate_toy_dataset(cfg.toy, cfg.data.n_z)
        path = Path(cfg.data.archive)
        if not path.is_dir():
            raise ConfigurationError("data.archive", f"'{path}' is not a directory")
        archive = read_archive(path)
        if archive.header.n_z != cfg.data.n_z:
            raise ConfigurationError(
                "data.n_z", f"archive uses {archive.header.n_z} bins, config uses {cfg.data.n_z}"
            )
        if (archive.header.height, archive.header.width) != (cfg.unet.image_size, cfg.unet.image_size):
            raise ConfigurationError(
                "unet.image_size",
                f"archive slices are {archive.header.height}x{archive.header.width}, "
                f"network expects {cfg.unet.image_size}"
            )
        return archive.records

    @staticmethod
    def split(cfg: ExperimentConfig, records: List[SliceRecord]) -> Tuple[List[SliceRecord], List[SliceRecord]]:
        """Subject-level split with the configured fraction and seed."""
        return subject_split(records, cfg.data.val_fraction, cfg.data.split_seed)

    def reference_records(self, cfg: ExperimentConfig) -> List[SliceRecord]:
        """Real slices generated samples are compared against."""
        records = self.load_records(cfg)
        if cfg.metrics.reference == "all":
            return records
        return self.split(cfg, records)[1]


# Global service instance
data_service = DataService()

"""
Training service: one (target, p) run in a self-describing run directory.
"""
import logging
from pathlib import Path

from src.config import write_resolved_config
from src.models import ExperimentConfig
from src.services.data_service import data_service
from src.training import Trainer, TrainResult, configure_torch
from src.utils.file_operations import FileOperations
from src.utils.logging_config import add_file_handler, remove_file_handler

logger = logging.getLogger(__name__)

RUN_INFO_FILE = "run.json"
SOURCE_ROOT = Path(__file__).resolve().parent.parent


def code_version() -> str:
    """sha256 over the package sources."""
    return FileOperations.sha256_tree(SOURCE_ROOT, "*.py")


class TrainingService:
    """Prepares the run directory, data split and trainer."""

    @staticmethod
    def write_run_info(cfg: ExperimentConfig, run_dir: Path) -> None:
        """Seeds and hashes that, with the resolved config, reproduce the run."""
        info = {
            "name": cfg.name,
            "config_hash": cfg.config_hash(),
            "architecture_hash": cfg.architecture_hash(),
            "code_version": code_version(),
            "seeds": {
                "train": cfg.train.seed,
                "split": cfg.data.split_seed,
                "sampler": cfg.sampler.seed,
                "toy": cfg.toy.seed,
            },
            "target": cfg.train.target.value,
            "p": cfg.train.loss.p,
        }
        FileOperations.write_json_with_lock(run_dir / RUN_INFO_FILE, info)

    def train(self, cfg: ExperimentConfig, run_dir: Path, resume: bool = False) -> TrainResult:
        """
        Train one model.

        Data and validation errors surface before the first optimizer step.

        Args:
            cfg: Resolved experiment config
            run_dir: Output directory
            resume: Continue from ``last.ckpt`` if present

        Returns:
            TrainResult
        """
        run_dir = Path(run_dir)
        FileOperations.ensure_directory(run_dir)
        configure_torch(cfg.runtime)
        records = data_service.load_records(cfg)
        train_records, val_records = data_service.split(cfg, records)
        trainer = Trainer(cfg, train_records, val_records, run_dir)

        write_resolved_config(cfg, run_dir)
        self.write_run_info(cfg, run_dir)
        log_path = add_file_handler("train.log", run_dir)
        try:
            result = trainer.fit(resume=resume)
        finally:
            remove_file_handler(log_path)
        logger.info(
            f"Best epoch {result.best_epoch} (val {result.best_val_loss:.5f}) after "
            f"{result.epochs_run} epochs{' (early stop)' if result.stopped_early else ''}"
        )
        return result


# Global service instance
training_service = TrainingService()

"""
Sweep service: trains, samples and evaluates every
(target, p, replica) cell, then assembles the report.

Layout of a sweep directory::

    <sweep_dir>/
      runs.json             cell index (status, run dir, error)
      <target>-p<p>-r<k>/   one self-describing run directory per cell
        metrics.csv
      baseline.csv          real-vs-real rows
      per_replica.csv       target, p, replica, seed, metric, value, std
      report.*              see ReportService

Cells run in separate processes when ``workers > 1``; each cell is
deterministic on its own, so the result does not depend on scheduling.
"""
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from tqdm import tqdm

from src.config import settings
from src.database import DONE, FAILED, RUN_INDEX_FILE, RUNNING, RunStore, cell_key
from src.evaluation import get_extractor, real_vs_real_baseline, rows_to_frame
from src.models import ExperimentConfig
from src.services.data_service import data_service
from src.services.evaluation_service import evaluation_service
from src.services.report_service import PER_REPLICA_COLUMNS, SweepReport, read_per_replica, report_service
from src.services.sampling_service import draw_tokens, sampling_service
from src.services.training_service import training_service
from src.utils.file_operations import FileOperations
from src.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

CELL_METRICS_FILE = "metrics.csv"
BASELINE_FILE = "baseline.csv"
PER_REPLICA_FILE = "per_replica.csv"

EXIT_PARTIAL_SWEEP = 3


@dataclass
class SweepOutcome:
    per_replica: pd.DataFrame
    report: SweepReport
    failed: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL_SWEEP if self.failed else 0


def run_cell(cfg_json: str, run_dir: str) -> List[dict]:
    """
    Train, sample and evaluate one cell.

    Top-level so worker processes can import it. Training resumes from
    ``last.ckpt`` when a previous attempt was interrupted.

    Returns:
        Metric rows as dicts
    """
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    run_dir = Path(run_dir)
    result = training_service.train(cfg, run_dir, resume=True)

    reference = data_service.reference_records(cfg)
    tokens = draw_tokens(
        reference, cfg.metrics.n_samples, cfg.metrics.token_distribution, cfg.data.n_z, cfg.sampler.seed
    )
    generated = sampling_service.generate(cfg, result.best_checkpoint, tokens)
    frame = evaluation_service.evaluate_records(reference, generated, cfg.metrics, cfg.data.n_z, baseline=False)
    FileOperations.write_text_atomic(run_dir / CELL_METRICS_FILE, frame.to_csv(index=False))
    return frame.to_dict("records")


def _worker_init(log_level: str) -> None:
    setup_logging(log_level=log_level)


def _read_cell_rows(run_dir: Path) -> List[dict]:
    return pd.read_csv(run_dir / CELL_METRICS_FILE).to_dict("records")


class SweepService:
    """Runs the targets x ps x replicas grid."""

    @staticmethod
    def plan(cfg: ExperimentConfig, sweep_dir: Path, store: RunStore) -> List[dict]:
        """Register every cell; replica k uses seed ``base_seed + k``."""
        cells = []
        sw = cfg.sweep
        for target in sw.targets:
            for p in sw.ps:
                for replica in range(sw.replicas):
                    key = cell_key(target.value, p, replica)
                    cells.append(store.register(
                        target.value, p, replica, sw.base_seed + replica, sweep_dir / key
                    ))
        return cells

    @staticmethod
    def cell_config(cfg: ExperimentConfig, cell: dict) -> ExperimentConfig:
        target = next(t for t in cfg.sweep.targets if t.value == cell["target"])
        return cfg.for_cell(target, cell["p"], cell["seed"])

    @staticmethod
    def _per_replica_rows(cell: dict, rows: List[dict]) -> List[dict]:
        return [
            {
                "target": cell["target"],
                "p": cell["p"],
                "replica": cell["replica"],
                "seed": cell["seed"],
                "metric": r["metric"],
                "value": r["value"],
                "std": r["std"],
            }
            for r in rows
        ]

    def _execute(self, cfg: ExperimentConfig, pending: List[dict], store: RunStore, workers: int) -> Dict[str, List[dict]]:
        results: Dict[str, List[dict]] = {}
        if not pending:
            return results

        def finish(cell: dict, rows: Optional[List[dict]], error: Optional[BaseException]) -> None:
            if error is None:
                store.set_status(cell["key"], DONE)
                results[cell["key"]] = rows
                logger.info(f"Cell {cell['key']} done")
            else:
                store.set_status(cell["key"], FAILED, f"{type(error).__name__}: {error}")
                logger.error(f"Cell {cell['key']} failed: {error}")

        progress = tqdm(total=len(pending), desc="sweep", disable=None)
        if workers <= 1:
            for cell in pending:
                store.set_status(cell["key"], RUNNING)
                try:
                    rows = run_cell(self.cell_config(cfg, cell).model_dump_json(), cell["run_dir"])
                except Exception as e:
                    finish(cell, None, e)
                else:
                    finish(cell, rows, None)
                progress.update(1)
        else:
            context = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(
                max_workers=workers, mp_context=context,
                initializer=_worker_init, initargs=(settings.log_level,)
            ) as pool:
                futures = {}
                for cell in pending:
                    store.set_status(cell["key"], RUNNING)
                    cfg_json = self.cell_config(cfg, cell).model_dump_json()
                    futures[pool.submit(run_cell, cfg_json, cell["run_dir"])] = cell
                for future in as_completed(futures):
                    cell = futures[future]
                    error = future.exception()
                    finish(cell, None if error else future.result(), error)
                    progress.update(1)
        progress.close()
        return results

    def baseline(self, cfg: ExperimentConfig, sweep_dir: Path) -> pd.DataFrame:
        """Real-vs-real metric rows, written once per sweep."""
        reference = data_service.reference_records(cfg)
        rows = real_vs_real_baseline(reference, cfg.metrics, get_extractor(cfg.metrics.extractor))
        frame = rows_to_frame(rows)
        FileOperations.write_text_atomic(sweep_dir / BASELINE_FILE, frame.to_csv(index=False))
        return frame

    def run(self, cfg: ExperimentConfig, sweep_dir: Path, workers: Optional[int] = None, xlsx: bool = False) -> SweepOutcome:
        """
        Run (or resume) the sweep and write the report.

        Cells already marked done are not retrained; their stored metric
        rows are reused. Failed cells are retried.

        Args:
            cfg: Resolved experiment config
            sweep_dir: Output directory
            workers: Parallel cells (defaults to ``sweep.workers``)
            xlsx: Also write ``report.xlsx``

        Returns:
            SweepOutcome; ``exit_code`` is 3 when any cell failed
        """
        sweep_dir = Path(sweep_dir)
        FileOperations.ensure_directory(sweep_dir)
        workers = workers or cfg.sweep.workers
        store = RunStore(sweep_dir / RUN_INDEX_FILE)
        cells = self.plan(cfg, sweep_dir, store)
        logger.info(
            f"Sweep: {len(cfg.sweep.targets)} targets x {len(cfg.sweep.ps)} ps x "
            f"{cfg.sweep.replicas} replicas = {len(cells)} cells, {workers} worker(s)"
        )

        self.baseline(cfg, sweep_dir)

        pending = [c for c in cells if not store.is_done(c["key"])]
        if len(pending) < len(cells):
            logger.info(f"Skipping {len(cells) - len(pending)} finished cell(s)")
        results = self._execute(cfg, pending, store, workers)

        rows: List[dict] = []
        failed: List[str] = []
        for cell in cells:
            key = cell["key"]
            if key in results:
                cell_rows = results[key]
            elif store.is_done(key):
                cell_rows = _read_cell_rows(Path(cell["run_dir"]))
            else:
                failed.append(key)
                continue
            rows.extend(self._per_replica_rows(cell, cell_rows))

        per_replica_csv = sweep_dir / PER_REPLICA_FILE
        FileOperations.write_text_atomic(
            per_replica_csv, pd.DataFrame(rows, columns=PER_REPLICA_COLUMNS).to_csv(index=False)
        )
        # The report is built from the CSV so regeneration gives identical output
        per_replica = read_per_replica(per_replica_csv)
        grid = [(t.value, p) for t in cfg.sweep.targets for p in cfg.sweep.ps]
        report = report_service.build(per_replica, cfg.metrics.alpha, cfg.sweep.replicas, grid)
        report_service.write(report, sweep_dir, xlsx)
        if failed:
            logger.warning(f"{len(failed)} of {len(cells)} cells failed: {', '.join(failed)}")
        return SweepOutcome(per_replica=per_replica, report=report, failed=failed)


# Global service instance
sweep_service = SweepService()

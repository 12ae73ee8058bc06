"""
Evaluation service: metric CSVs for generated archives, with the
real-vs-real baseline alongside.
"""
import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.data import read_archive
from src.evaluation import evaluate_samples, get_extractor, read_feature_file, real_vs_real_baseline, rows_to_frame
from src.models import MetricSettings, SliceRecord
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

GEN_VS_REAL = "gen-vs-real"
REAL_VS_REAL = "real-vs-real"


class EvaluationService:
    """Runs the metric suite and renders metric rows."""

    @staticmethod
    def evaluate_records(
        real: Sequence[SliceRecord],
        gen: Sequence[SliceRecord],
        settings: MetricSettings,
        n_z: int,
        baseline: bool = True,
        real_feats: Optional[np.ndarray] = None,
        gen_feats: Optional[np.ndarray] = None
    ) -> pd.DataFrame:
        """
        Generated-vs-real rows, plus real-vs-real rows when ``baseline``.

        Returns:
            DataFrame with a leading ``comparison`` column
        """
        extractor = get_extractor(settings.extractor)
        rows = evaluate_samples(real, gen, settings, extractor, real_feats, gen_feats, n_z=n_z)
        frames = [rows_to_frame(rows, comparison=GEN_VS_REAL)]
        if baseline:
            frames.append(rows_to_frame(real_vs_real_baseline(real, settings, extractor), comparison=REAL_VS_REAL))
        return pd.concat(frames, ignore_index=True)

    def evaluate_archives(
        self,
        gen_archive: Path,
        real_archive: Path,
        settings: MetricSettings,
        out_csv: Path,
        real_features: Optional[Path] = None,
        gen_features: Optional[Path] = None
    ) -> pd.DataFrame:
        """
        Evaluate two archives and write the metric CSV.

        Precomputed feature files, when given for both sides, replace the
        registered extractor for KID.
        """
        gen = read_archive(gen_archive)
        real = read_archive(real_archive)
        real_feats = gen_feats = None
        if real_features is not None and gen_features is not None:
            real_feats = read_feature_file(real_features)
            gen_feats = read_feature_file(gen_features)
        frame = self.evaluate_records(
            real.records, gen.records, settings, real.header.n_z,
            real_feats=real_feats, gen_feats=gen_feats,
        )
        FileOperations.write_text_atomic(Path(out_csv), frame.to_csv(index=False))
        logger.info(f"Wrote {len(frame)} metric rows to {out_csv}")
        return frame


# Global service instance
evaluation_service = EvaluationService()

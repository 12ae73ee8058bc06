"""
Report service: aggregates per-replica metric rows into the
target x p grid and runs the statistics pipeline.

Statistics (per headline metric):
- Kruskal-Wallis across prediction targets, pooling every replica and p;
  Dunn pairs with Benjamini-Hochberg adjustment, gated on the KW p-value.
- Friedman across p within each target (replicas are the blocks);
  Nemenyi critical difference, gated on the Friedman p-value.
- Cliff's delta (with magnitude label) on every post-hoc pair.

The block is a pure function of the per-replica table.
"""
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from openpyxl.utils import get_column_letter

from src.evaluation import IOU_METRIC, PERCEPTUAL_PROXY_NAME, WASSERSTEIN_PREFIX
from src.exceptions import UsageError
from src.models import SHAPE_FEATURE_NAMES
from src.stats import (
    adjust_pairs,
    cliffs_delta,
    cliffs_magnitude,
    dunn_posthoc,
    friedman,
    kruskal_wallis,
    nemenyi,
)
from src.utils.file_operations import FileOperations

logger = logging.getLogger(__name__)

PER_REPLICA_COLUMNS = ["target", "p", "replica", "seed", "metric", "value", "std"]
HEADLINE_METRICS = ["kid", PERCEPTUAL_PROXY_NAME, "mmd-mf"]
HIGHER_IS_BETTER = {IOU_METRIC}
STATS_COLUMNS = [
    "test", "metric", "scope", "comparison", "statistic", "p",
    "adjusted_p", "effect_size", "magnitude", "gated", "reject",
]

REPORT_FILES = {
    "cells": "report_cells.csv",
    "table": "report.csv",
    "text": "report.txt",
    "wasserstein": "report_wasserstein.csv",
    "stats": "stats.csv",
    "stats_json": "stats.json",
    "xlsx": "report.xlsx",
}


@dataclass
class SweepReport:
    cells: pd.DataFrame
    table: pd.DataFrame
    wasserstein: pd.DataFrame
    stats: pd.DataFrame
    findings: Dict[str, str] = field(default_factory=dict)
    incomplete: List[str] = field(default_factory=list)


def _ordered(values: pd.Series) -> list:
    return list(dict.fromkeys(values.tolist()))


def _stat_row(test: str, metric: str, scope: str, comparison: str, statistic: float,
              p: float = np.nan, adjusted_p: float = np.nan, effect_size: float = np.nan,
              gated: bool = False, reject: Optional[bool] = None) -> dict:
    return {
        "test": test,
        "metric": metric,
        "scope": scope,
        "comparison": comparison,
        "statistic": statistic,
        "p": p,
        "adjusted_p": adjusted_p,
        "effect_size": effect_size,
        "magnitude": cliffs_magnitude(effect_size) if np.isfinite(effect_size) else "",
        "gated": gated,
        "reject": reject,
    }


def _targets_block(data: pd.DataFrame, metric: str, alpha: float) -> List[dict]:
    targets = _ordered(data["target"])
    groups = [data.loc[data["target"] == t, "value"].to_numpy() for t in targets]
    if len(groups) < 2 or sum(g.size for g in groups) < 3 or any(g.size == 0 for g in groups):
        logger.warning(f"{metric}: not enough data for Kruskal-Wallis across targets")
        return []
    kw = kruskal_wallis(groups)
    rows = [_stat_row("kruskal-wallis", metric, "all", "targets", kw.statistic, kw.pvalue)]
    gated = not kw.pvalue < alpha
    if gated:
        logger.warning(f"{metric}: Kruskal-Wallis p={kw.pvalue:.3g} >= {alpha}, Dunn post-hoc is gated")
    pairs = adjust_pairs(dunn_posthoc(groups, targets), alpha)
    by_name = dict(zip(targets, groups))
    for c in pairs:
        delta = cliffs_delta(by_name[c.a], by_name[c.b])
        rows.append(_stat_row(
            "dunn", metric, "all", f"{c.a} vs {c.b}", c.statistic, c.pvalue,
            c.adjusted_p, delta, gated, c.reject,
        ))
    return rows


def _ps_block(data: pd.DataFrame, metric: str, target: str, alpha: float) -> List[dict]:
    subset = data[data["target"] == target]
    matrix = subset.pivot_table(index="replica", columns="p", values="value", aggfunc="first")
    matrix = matrix.reindex(columns=sorted(matrix.columns)).dropna(axis=0, how="any")
    if matrix.shape[0] < 2 or matrix.shape[1] < 2:
        logger.warning(f"{metric}/{target}: Friedman needs >= 2 complete replicas and >= 2 exponents")
        return []
    labels = [f"p={p:g}" for p in matrix.columns]
    values = matrix.to_numpy()
    fr = friedman(values)
    rows = [_stat_row("friedman", metric, target, "ps", fr.statistic, fr.pvalue)]
    gated = not fr.pvalue < alpha
    if gated:
        logger.warning(f"{metric}/{target}: Friedman p={fr.pvalue:.3g} >= {alpha}, Nemenyi is gated")
    result = nemenyi(values, labels, alpha)
    columns = dict(zip(labels, values.T))
    for c in result.pairs:
        delta = cliffs_delta(columns[c.a], columns[c.b])
        rows.append(_stat_row(
            "nemenyi", metric, target, f"{c.a} vs {c.b}", c.statistic,
            effect_size=delta, gated=gated, reject=c.reject,
        ))
    return rows


def stats_block(per_replica: pd.DataFrame, alpha: float = 0.05) -> pd.DataFrame:
    """Statistics rows for every headline metric."""
    rows: List[dict] = []
    for metric in HEADLINE_METRICS:
        data = per_replica[(per_replica["metric"] == metric) & np.isfinite(per_replica["value"])]
        if data.empty:
            continue
        rows.extend(_targets_block(data, metric, alpha))
        for target in _ordered(data["target"]):
            rows.extend(_ps_block(data, metric, target, alpha))
    return pd.DataFrame(rows, columns=STATS_COLUMNS)


def aggregate_cells(per_replica: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and std (ddof=1; 0 for a single replica) per (target, p, metric),
    with ``best``/``worst`` flags per metric.
    """
    grouped = per_replica.groupby(["target", "p", "metric"], sort=False)["value"]
    cells = grouped.agg(
        mean="mean",
        std=lambda v: float(v.std(ddof=1)) if v.count() > 1 else 0.0,
        n="count",
    ).reset_index()
    cells["flag"] = ""
    for metric, idx in cells.groupby("metric", sort=False).groups.items():
        means = cells.loc[idx, "mean"].dropna()
        if means.size < 2 or means.nunique() < 2:
            continue
        higher = metric in HIGHER_IS_BETTER
        best = means.idxmax() if higher else means.idxmin()
        worst = means.idxmin() if higher else means.idxmax()
        cells.loc[best, "flag"] = "best"
        cells.loc[worst, "flag"] = "worst"
    return cells


def _cell_text(row: pd.Series) -> str:
    if not np.isfinite(row["mean"]):
        return "n/a"
    text = f"{row['mean']:.4g} ± {row['std']:.2g}"
    return f"{text} ({row['flag']})" if row["flag"] else text


def table_view(cells: pd.DataFrame, metrics: List[str]) -> pd.DataFrame:
    """Wide ``target, p, <metric>...`` table of formatted ``mean ± std`` cells."""
    subset = cells[cells["metric"].isin(metrics)].copy()
    if subset.empty:
        return pd.DataFrame(columns=["target", "p"])
    subset["text"] = subset.apply(_cell_text, axis=1)
    wide = subset.pivot_table(index=["target", "p"], columns="metric", values="text", aggfunc="first", sort=False)
    return wide.reindex(columns=[m for m in metrics if m in wide.columns]).reset_index()


def wasserstein_view(cells: pd.DataFrame) -> pd.DataFrame:
    """Per-feature Wasserstein means, one column per shape feature."""
    names = [f"{WASSERSTEIN_PREFIX}{f}" for f in SHAPE_FEATURE_NAMES]
    subset = cells[cells["metric"].isin(names)]
    if subset.empty:
        return pd.DataFrame(columns=["target", "p"])
    wide = subset.pivot_table(index=["target", "p"], columns="metric", values="mean", aggfunc="first", sort=False)
    wide = wide.reindex(columns=[n for n in names if n in wide.columns])
    wide.columns = [c[len(WASSERSTEIN_PREFIX):] for c in wide.columns]
    return wide.reset_index()


def directional_findings(per_replica: pd.DataFrame) -> Dict[str, str]:
    """Best target per headline metric, pooling p and replicas."""
    findings = {}
    for metric in HEADLINE_METRICS + [IOU_METRIC]:
        data = per_replica[(per_replica["metric"] == metric) & np.isfinite(per_replica["value"])]
        if data.empty:
            continue
        means = data.groupby("target", sort=False)["value"].mean()
        findings[metric] = str(means.idxmax() if metric in HIGHER_IS_BETTER else means.idxmin())
    return findings


class ReportService:
    """Builds and renders sweep reports."""

    @staticmethod
    def build(
        per_replica: pd.DataFrame,
        alpha: float = 0.05,
        expected_replicas: Optional[int] = None,
        grid: Optional[List[tuple]] = None
    ) -> SweepReport:
        """
        Aggregate and test a per-replica table.

        Args:
            per_replica: Rows with ``PER_REPLICA_COLUMNS``
            alpha: Significance level for gating
            expected_replicas: Replicas a complete cell should have
            grid: Expected (target, p) cells; missing ones are reported as incomplete

        Returns:
            SweepReport
        """
        missing = [c for c in PER_REPLICA_COLUMNS if c not in per_replica.columns]
        if missing:
            raise UsageError(f"per-replica table lacks columns: {', '.join(missing)}")
        cells = aggregate_cells(per_replica)
        expected = expected_replicas or int(per_replica.groupby(["target", "p"])["replica"].nunique().max())
        counts = per_replica.groupby(["target", "p"], sort=False)["replica"].nunique()
        incomplete = [f"{t}/p={p:g}" for (t, p), n in counts.items() if n < expected]
        for t, p in grid or []:
            if (t, float(p)) not in {(a, float(b)) for a, b in counts.index}:
                incomplete.append(f"{t}/p={float(p):g}")
        if incomplete:
            logger.warning(f"Incomplete cells: {', '.join(incomplete)}")
        findings = directional_findings(per_replica)
        for metric, target in findings.items():
            logger.info(f"Lowest-error target on {metric}: {target}" if metric not in HIGHER_IS_BETTER
                        else f"Best target on {metric}: {target}")
        return SweepReport(
            cells=cells,
            table=table_view(cells, HEADLINE_METRICS + [IOU_METRIC]),
            wasserstein=wasserstein_view(cells),
            stats=stats_block(per_replica, alpha),
            findings=findings,
            incomplete=incomplete,
        )

    @staticmethod
    def render_text(report: SweepReport) -> str:
        """Aligned plain-text rendering."""
        parts = ["Global metrics (mean ± std over replicas)", report.table.to_string(index=False), ""]
        if not report.wasserstein.empty:
            parts += ["Per-feature Wasserstein distances", report.wasserstein.to_string(index=False, float_format="%.4g"), ""]
        if not report.stats.empty:
            parts += ["Statistics", report.stats.to_string(index=False, float_format="%.4g"), ""]
        if report.findings:
            parts.append("Best target per metric: " + ", ".join(f"{m}={t}" for m, t in report.findings.items()))
        if report.incomplete:
            parts.append("Incomplete cells: " + ", ".join(report.incomplete))
        return "\n".join(parts) + "\n"

    @staticmethod
    def _xlsx_bytes(report: SweepReport) -> bytes:
        output = io.BytesIO()
        with pd.ExcelWriter(output, engine='openpyxl') as writer:
            for sheet, frame in (("Table", report.table), ("Cells", report.cells),
                                 ("Wasserstein", report.wasserstein), ("Stats", report.stats)):
                frame.to_excel(writer, index=False, sheet_name=sheet)
                worksheet = writer.sheets[sheet]
                for idx, col in enumerate(frame.columns):
                    max_length = max(frame[col].astype(str).map(len).max() if len(frame) else 0, len(str(col)))
                    worksheet.column_dimensions[get_column_letter(idx + 1)].width = min(max_length + 2, 50)
        return output.getvalue()

    def write(self, report: SweepReport, out_dir: Path, xlsx: bool = False) -> Dict[str, Path]:
        """
        Write CSV, text, JSON and optionally Excel renderings.

        Returns:
            Mapping of rendering name to path
        """
        out_dir = Path(out_dir)
        FileOperations.ensure_directory(out_dir)
        paths = {name: out_dir / file for name, file in REPORT_FILES.items()}
        FileOperations.write_text_atomic(paths["cells"], report.cells.to_csv(index=False))
        FileOperations.write_text_atomic(paths["table"], report.table.to_csv(index=False))
        FileOperations.write_text_atomic(paths["wasserstein"], report.wasserstein.to_csv(index=False))
        FileOperations.write_text_atomic(paths["stats"], report.stats.to_csv(index=False))
        FileOperations.write_text_atomic(paths["text"], self.render_text(report))
        payload = {
            "stats": json.loads(report.stats.to_json(orient="records")),
            "findings": report.findings,
            "incomplete": report.incomplete,
        }
        FileOperations.write_text_atomic(paths["stats_json"], json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if xlsx:
            FileOperations.write_bytes_atomic(paths["xlsx"], self._xlsx_bytes(report))
        else:
            paths.pop("xlsx")
        logger.info(f"Report written to {out_dir}")
        return paths

    def from_csv(self, per_replica_csv: Path, out_dir: Path, alpha: float = 0.05, xlsx: bool = False) -> SweepReport:
        """Regenerate a report from a stored per-replica CSV."""
        per_replica = read_per_replica(per_replica_csv)
        report = self.build(per_replica, alpha)
        self.write(report, out_dir, xlsx)
        return report


def read_per_replica(path: Path) -> pd.DataFrame:
    """Load a per-replica CSV with the column types the report expects."""
    frame = pd.read_csv(path, dtype={"target": str, "metric": str})
    missing = [c for c in PER_REPLICA_COLUMNS if c not in frame.columns]
    if missing:
        raise UsageError(f"{path} lacks columns: {', '.join(missing)}")
    frame["p"] = frame["p"].astype(float)
    return frame


# Global service instance
report_service = ReportService()

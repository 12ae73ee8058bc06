"""
Tests for the report and sweep services.
"""
import io
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from openpyxl import load_workbook

from src.database import DONE, FAILED, RUN_INDEX_FILE, RunStore
from src.exceptions import UsageError
from src.services.report_service import (
    PER_REPLICA_COLUMNS,
    REPORT_FILES,
    SweepReport,
    aggregate_cells,
    read_per_replica,
    report_service,
    stats_block,
)
from src.services.sweep_service import CELL_METRICS_FILE, PER_REPLICA_FILE, sweep_service
from src.stats import friedman, kruskal_wallis

# src.services re-exports the `sweep_service` instance under the submodule's
# name, so `import ... as` would bind the instance rather than the module.
sweep_module = sys.modules["src.services.sweep_service"]

TARGETS = ["epsilon", "velocity", "x0"]
PS = [1.5, 2.0, 2.5]
METRICS = ["kid", "lpips-proxy", "mmd-mf", "lesion-iou"]
OFFSETS = {"epsilon": 0.3, "velocity": 0.2, "x0": 0.1}


def per_replica_frame(rng, replicas=2):
    """Synthetic per-replica table; x0 has the lowest error."""
    rows = []
    for target in TARGETS:
        for p in PS:
            for replica in range(replicas):
                for metric in METRICS:
                    value = OFFSETS[target] + 0.01 * p + 0.005 * rng.random()
                    if metric == "lesion-iou":
                        value = 1.0 - value
                    rows.append({
                        "target": target, "p": p, "replica": replica, "seed": replica,
                        "metric": metric, "value": value, "std": 0.0,
                    })
    return pd.DataFrame(rows, columns=PER_REPLICA_COLUMNS)


class TestReport:
    """Tests for ReportService and its helpers."""

    def test_kruskal_row_matches_direct_call(self, rng):
        """The targets row pools every p and replica of a target."""
        frame = per_replica_frame(rng)
        stats = stats_block(frame)
        row = stats[(stats["test"] == "kruskal-wallis") & (stats["metric"] == "kid")].iloc[0]
        kid = frame[frame["metric"] == "kid"]
        groups = [kid.loc[kid["target"] == t, "value"].to_numpy() for t in TARGETS]
        expected = kruskal_wallis(groups)
        assert row["statistic"] == pytest.approx(expected.statistic)
        assert row["p"] == pytest.approx(expected.pvalue)

    def test_friedman_rows_per_target(self, rng):
        """One Friedman row per target, replicas as blocks."""
        frame = per_replica_frame(rng)
        stats = stats_block(frame)
        rows = stats[(stats["test"] == "friedman") & (stats["metric"] == "mmd-mf")]
        assert rows["scope"].tolist() == TARGETS
        subset = frame[(frame["metric"] == "mmd-mf") & (frame["target"] == "velocity")]
        matrix = subset.pivot_table(index="replica", columns="p", values="value").to_numpy()
        assert rows.iloc[1]["statistic"] == pytest.approx(friedman(matrix).statistic)

    def test_post_hoc_pairs(self, rng):
        """Dunn pairs carry adjusted p-values and Cliff's delta."""
        stats = stats_block(per_replica_frame(rng))
        dunn = stats[(stats["test"] == "dunn") & (stats["metric"] == "kid")]
        assert dunn["comparison"].tolist() == ["epsilon vs velocity", "epsilon vs x0", "velocity vs x0"]
        assert (dunn["adjusted_p"] >= dunn["p"]).all()
        # epsilon is higher than x0 in every replica
        assert dunn.iloc[1]["effect_size"] == 1.0
        assert dunn.iloc[1]["magnitude"] == "large"

    def test_single_replica_grid(self, rng):
        """Nine cells with one replica: KW still runs, Friedman does not."""
        frame = per_replica_frame(rng, replicas=1)
        report = report_service.build(frame)
        kid_cells = report.cells[report.cells["metric"] == "kid"]
        assert len(kid_cells) == 9
        assert (kid_cells["std"] == 0.0).all()
        tests = set(report.stats["test"])
        assert "kruskal-wallis" in tests
        assert "friedman" not in tests

    def test_flags_and_findings(self, rng):
        """x0 is best on error metrics; IoU is higher-is-better."""
        report = report_service.build(per_replica_frame(rng))
        cells = report.cells
        kid_best = cells[(cells["metric"] == "kid") & (cells["flag"] == "best")].iloc[0]
        iou_best = cells[(cells["metric"] == "lesion-iou") & (cells["flag"] == "best")].iloc[0]
        assert kid_best["target"] == "x0"
        assert iou_best["target"] == "x0"
        assert report.findings["kid"] == "x0"
        assert report.findings["lesion-iou"] == "x0"

    def test_std_is_sample_std(self, rng):
        """Two replicas use ddof = 1."""
        frame = per_replica_frame(rng)
        cells = aggregate_cells(frame)
        cell = cells[(cells["target"] == "x0") & (cells["p"] == 2.0) & (cells["metric"] == "kid")].iloc[0]
        values = frame[(frame["target"] == "x0") & (frame["p"] == 2.0) & (frame["metric"] == "kid")]["value"]
        assert cell["std"] == pytest.approx(np.std(values, ddof=1))
        assert cell["n"] == 2

    def test_incomplete_cells(self, rng):
        """Missing replicas and missing grid cells are listed."""
        frame = per_replica_frame(rng)
        frame = frame[~((frame["target"] == "x0") & (frame["p"] == 2.5) & (frame["replica"] == 1))]
        report = report_service.build(frame, grid=[("x0", 2.5), ("x0", 3.0)])
        assert report.incomplete == ["x0/p=2.5", "x0/p=3"]

    def test_missing_columns(self, rng):
        """The per-replica schema is required."""
        with pytest.raises(UsageError):
            report_service.build(per_replica_frame(rng).drop(columns=["seed"]))

    def test_regeneration_is_identical(self, rng, tmp_path):
        """Two reports from one CSV are byte-identical."""
        csv = tmp_path / "per_replica.csv"
        per_replica_frame(rng).to_csv(csv, index=False)
        report_service.from_csv(csv, tmp_path / "a")
        report_service.from_csv(csv, tmp_path / "b", xlsx=True)
        for name, file in REPORT_FILES.items():
            if name == "xlsx":
                continue
            assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()
        assert (tmp_path / "b" / REPORT_FILES["xlsx"]).stat().st_size > 0
        assert not (tmp_path / "a" / REPORT_FILES["xlsx"]).exists()

    def test_xlsx_sizes_columns_past_z(self):
        """Column widths are set on every column of a sheet wider than 26 columns."""
        wide = pd.DataFrame({f"feature_{i:02d}": [float(i)] for i in range(30)})
        empty = pd.DataFrame(columns=["target", "p"])
        report = SweepReport(cells=wide, table=empty, wasserstein=empty, stats=empty)
        workbook = load_workbook(io.BytesIO(report_service._xlsx_bytes(report)))
        sheet = workbook["Cells"]
        assert sheet["AD1"].value == "feature_29"
        assert sheet.column_dimensions["AD"].width == len("feature_29") + 2
        assert sheet.column_dimensions["A"].width == len("feature_00") + 2

    def test_stats_json(self, rng, tmp_path):
        """stats.json carries the statistics, findings and incomplete cells."""
        csv = tmp_path / "per_replica.csv"
        per_replica_frame(rng).to_csv(csv, index=False)
        report_service.from_csv(csv, tmp_path)
        payload = json.loads((tmp_path / REPORT_FILES["stats_json"]).read_text())
        assert set(payload) == {"stats", "findings", "incomplete"}
        assert payload["incomplete"] == []
        assert len(payload["stats"]) == len(pd.read_csv(tmp_path / REPORT_FILES["stats"]))

    def test_read_per_replica_types(self, rng, tmp_path):
        """p comes back as float even when written as an integer."""
        frame = per_replica_frame(rng)
        frame["p"] = 2
        frame.to_csv(tmp_path / "pr.csv", index=False)
        assert read_per_replica(tmp_path / "pr.csv")["p"].dtype == np.float64


class FakeCell:
    """Stands in for run_cell: writes metrics.csv and records which cells ran."""

    def __init__(self, fail=()):
        self.fail = set(fail)
        self.calls = []

    def __call__(self, cfg_json, run_dir):
        cfg = json.loads(cfg_json)
        key = Path(run_dir).name
        self.calls.append(key)
        if key in self.fail:
            raise RuntimeError("boom")
        target, p, seed = cfg["train"]["target"], cfg["train"]["loss"]["p"], cfg["train"]["seed"]
        rows = [
            {"metric": m, "value": OFFSETS[target] + 0.01 * p + 0.001 * seed, "std": 0.0}
            for m in METRICS
        ]
        out = Path(run_dir)
        out.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows).to_csv(out / CELL_METRICS_FILE, index=False)
        return rows


class TestSweep:
    """Tests for SweepService with the cell runner replaced."""

    def test_partial_then_resume(self, tiny_experiment, tmp_path, monkeypatch):
        """A failed cell gives exit 3; the rerun only retries that cell."""
        sweep_dir = tmp_path / "sweep"
        fake = FakeCell(fail={"x0-p2.0-r1"})
        monkeypatch.setattr(sweep_module, "run_cell", fake)
        outcome = sweep_service.run(tiny_experiment, sweep_dir)

        assert outcome.exit_code == 3
        assert outcome.failed == ["x0-p2.0-r1"]
        assert len(fake.calls) == 8
        store = RunStore(sweep_dir / RUN_INDEX_FILE)
        assert store.get("x0-p2.0-r1")["status"] == FAILED
        assert store.get("x0-p2.0-r1")["error"] == "RuntimeError: boom"
        assert "x0/p=2" in outcome.report.incomplete
        assert (sweep_dir / "baseline.csv").exists()

        fake = FakeCell()
        monkeypatch.setattr(sweep_module, "run_cell", fake)
        outcome = sweep_service.run(tiny_experiment, sweep_dir)
        assert outcome.exit_code == 0
        assert fake.calls == ["x0-p2.0-r1"]
        assert all(c["status"] == DONE for c in RunStore(sweep_dir / RUN_INDEX_FILE).all_cells())
        assert outcome.report.incomplete == []
        assert len(outcome.per_replica) == 2 * 2 * 2 * len(METRICS)

    def test_cell_seeds(self, tiny_experiment, tmp_path, monkeypatch):
        """Replica k trains with base_seed + k."""
        monkeypatch.setattr(sweep_module, "run_cell", FakeCell())
        outcome = sweep_service.run(tiny_experiment, tmp_path / "sweep")
        seeds = outcome.per_replica.groupby("replica")["seed"].unique()
        base = tiny_experiment.sweep.base_seed
        assert {r: list(s) for r, s in seeds.items()} == {0: [base], 1: [base + 1]}

    def test_report_matches_regeneration(self, tiny_experiment, tmp_path, monkeypatch):
        """The report command reproduces the sweep's own report."""
        sweep_dir = tmp_path / "sweep"
        monkeypatch.setattr(sweep_module, "run_cell", FakeCell())
        sweep_service.run(tiny_experiment, sweep_dir)
        report_service.from_csv(sweep_dir / PER_REPLICA_FILE, tmp_path / "again", tiny_experiment.metrics.alpha)
        for name in ("cells", "table", "stats", "text"):
            file = REPORT_FILES[name]
            assert (sweep_dir / file).read_bytes() == (tmp_path / "again" / file).read_bytes()

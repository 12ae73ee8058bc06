"""
Unit tests for the sweep cell index.
"""
import pytest

from src.database import DONE, FAILED, PENDING, RUNNING, RunStore, cell_key


class TestCellKey:
    """Tests for cell_key."""

    def test_format(self):
        """Target, exponent and replica in a stable string."""
        assert cell_key("x0", 2, 1) == "x0-p2.0-r1"
        assert cell_key("epsilon", 1.5, 0) == "epsilon-p1.5-r0"


class TestRunStore:
    """Tests for RunStore."""

    def test_register_is_idempotent(self, tmp_path):
        """Registering a known cell keeps its state."""
        store = RunStore(tmp_path / "runs.json")
        store.register("x0", 2.0, 0, 10, tmp_path / "a")
        store.set_status("x0-p2.0-r0", DONE)
        cell = store.register("x0", 2.0, 0, 99, tmp_path / "b")
        assert cell["status"] == DONE
        assert cell["seed"] == 10

    def test_persists_across_instances(self, tmp_path):
        """Status changes survive a reload."""
        store = RunStore(tmp_path / "runs.json")
        store.register("velocity", 1.5, 1, 1, tmp_path / "v")
        store.set_status("velocity-p1.5-r1", FAILED, "NumericError: boom")
        reloaded = RunStore(tmp_path / "runs.json")
        cell = reloaded.get("velocity-p1.5-r1")
        assert cell["status"] == FAILED
        assert cell["error"] == "NumericError: boom"
        assert not reloaded.is_done("velocity-p1.5-r1")

    def test_by_status_and_order(self, tmp_path):
        """Cells are listed by target, p and replica."""
        store = RunStore(tmp_path / "runs.json")
        for target, p, r in [("x0", 2.0, 1), ("epsilon", 2.5, 0), ("x0", 1.5, 0)]:
            store.register(target, p, r, r, tmp_path / cell_key(target, p, r))
        store.set_status("x0-p1.5-r0", RUNNING)
        assert [c["key"] for c in store.all_cells()] == ["epsilon-p2.5-r0", "x0-p1.5-r0", "x0-p2.0-r1"]
        assert [c["key"] for c in store.by_status(PENDING)] == ["epsilon-p2.5-r0", "x0-p2.0-r1"]

    def test_unknown_status(self, tmp_path):
        """Only the four statuses are accepted."""
        store = RunStore(tmp_path / "runs.json")
        store.register("x0", 2.0, 0, 0, tmp_path)
        with pytest.raises(ValueError):
            store.set_status("x0-p2.0-r0", "paused")

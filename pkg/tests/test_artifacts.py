"""CSV/npz artifacts, run manifests and the run ledger."""

import json

import numpy as np
import pytest

from errors import ArtifactIOError
from physics.densities import Axis, CorrelationDensity, Density1D, Density2D, estimate_density_1d, joint_histogram
from physics.reconstruction import theoretical_w0
from physics.simulator import DetectorRecords, SimulationConfig, simulate
from physics.states import Fock, Vacuum
from utils.artifacts import (
    export_plot_data,
    load_artifact,
    load_records,
    read_metadata,
    save_artifact,
    save_records,
    sha256_file,
    stderr_path,
)
from utils.ledger import list_runs, record_run
from utils.manifest import MANIFEST_NAME, verify_manifest, write_manifest


def _assert_same(a, b):
    assert type(a) is type(b)
    np.testing.assert_array_equal(a.values, b.values)
    if a.stderr is None:
        assert b.stderr is None
    else:
        np.testing.assert_array_equal(a.stderr, b.stderr)
    assert a.provenance == b.provenance
    assert a.n_samples == b.n_samples
    assert a.overflow == b.overflow


@pytest.fixture(scope="module")
def records():
    return simulate(SimulationConfig(state=Fock(n=1), n_samples=5000, seed=99))


class TestStatObjects:
    def test_density1d_bitwise(self, tmp_path, records):
        p = estimate_density_1d(records.d, Axis(-8.0, 8.0, 160))
        save_artifact(p, tmp_path / "pd.csv")
        back = load_artifact(tmp_path / "pd.csv")
        _assert_same(p, back)
        assert back.axis == p.axis

    def test_density2d_writes_stderr_sibling(self, tmp_path, records):
        p = joint_histogram(records, Axis(-6.0, 6.0, 40))
        files = save_artifact(p, tmp_path / "joint.csv")
        assert files == [tmp_path / "joint.csv", stderr_path(tmp_path / "joint.csv")]
        assert files[1].name == "joint.stderr.csv"
        _assert_same(p, load_artifact(tmp_path / "joint.csv"))

    def test_correlation_keeps_window(self, tmp_path):
        w = theoretical_w0(Vacuum(), Axis(-2.0, 2.0, 100), epsilon=0.1)
        save_artifact(w, tmp_path / "w0.csv")
        back = load_artifact(tmp_path / "w0.csv")
        assert isinstance(back, CorrelationDensity)
        assert back.epsilon == w.epsilon
        np.testing.assert_array_equal(np.isnan(back.values), ~w.covered)
        np.testing.assert_array_equal(back.values[w.covered], w.values[w.covered])
        meta = read_metadata(tmp_path / "w0.csv")
        assert meta["kind"] == "correlation"
        assert meta["excluded_mass"] == pytest.approx(w.excluded_mass)

    def test_inverted_negative_values_survive(self, tmp_path):
        p = Density1D(axis=Axis(-1.0, 1.0, 4), values=np.array([0.1, -0.2, 1e-300, 3.0]), provenance="inverted", n_samples=12.5)
        save_artifact(p, tmp_path / "inv.csv")
        _assert_same(p, load_artifact(tmp_path / "inv.csv"))

    def test_header_columns(self, tmp_path):
        save_artifact(Density1D(axis=Axis(0.0, 1.0, 2), values=np.ones(2)), tmp_path / "a.csv")
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0].startswith("# {")
        assert lines[1] == "x,density,stderr"
        assert lines[2].endswith(",")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactIOError) as info:
            load_artifact(tmp_path / "nope.csv")
        assert info.value.exit_code == 4

    def test_missing_metadata_line(self, tmp_path):
        (tmp_path / "bare.csv").write_text("x,density,stderr\n0.5,1.0,\n")
        with pytest.raises(ArtifactIOError):
            load_artifact(tmp_path / "bare.csv")

    def test_truncated_rows(self, tmp_path):
        path = tmp_path / "cut.csv"
        save_artifact(Density1D(axis=Axis(0.0, 1.0, 4), values=np.ones(4)), path)
        path.write_text("\n".join(path.read_text().splitlines()[:-1]) + "\n")
        with pytest.raises(ArtifactIOError):
            load_artifact(path)


class TestRecords:
    def test_round_trip(self, tmp_path, records):
        save_records(records, tmp_path / "r.npz", {"label": "fock1"})
        back, meta = load_records(tmp_path / "r.npz")
        np.testing.assert_array_equal(back.i1, records.i1)
        np.testing.assert_array_equal(back.i2, records.i2)
        assert meta == {"label": "fock1"}

    def test_readable_by_numpy(self, tmp_path, records):
        save_records(records, tmp_path / "r.npz")
        with np.load(tmp_path / "r.npz") as data:
            assert set(data.files) == {"i1", "i2", "metadata"}

    def test_identical_bytes_on_resave(self, tmp_path, records):
        save_records(records, tmp_path / "a.npz", {"seed": 1})
        save_records(records, tmp_path / "b.npz", {"seed": 1})
        assert sha256_file(tmp_path / "a.npz") == sha256_file(tmp_path / "b.npz")

    def test_corrupt_archive(self, tmp_path):
        (tmp_path / "bad.npz").write_bytes(b"not a zip")
        with pytest.raises(ArtifactIOError):
            load_records(tmp_path / "bad.npz")


class TestExport:
    def test_json_uses_null_for_window(self, tmp_path):
        w = theoretical_w0(Vacuum(), Axis(-2.0, 2.0, 100), epsilon=0.1)
        export_plot_data(w, tmp_path / "w0.json", "json")
        data = json.loads((tmp_path / "w0.json").read_text())
        assert data["values"][50] is None
        assert len(data["centers"]) == 100

    def test_records_export_as_table(self, tmp_path):
        rec = DetectorRecords(np.array([1.5, -2.0]), np.array([0.25, 3.0]))
        export_plot_data(rec, tmp_path / "rec.csv")
        assert (tmp_path / "rec.csv").read_text().splitlines() == ["i1,i2", "1.5,0.25", "-2.0,3.0"]
        with pytest.raises(ValueError):
            export_plot_data(rec, tmp_path / "rec.json", "json")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            export_plot_data(Density1D(axis=Axis(0.0, 1.0, 2), values=np.ones(2)), tmp_path / "x", "xml")


class TestManifest:
    @pytest.fixture
    def run_dir(self, tmp_path):
        save_artifact(Density1D(axis=Axis(0.0, 1.0, 2), values=np.ones(2)), tmp_path / "plots" / "a.csv")
        save_artifact(
            Density2D(x_axis=Axis(0.0, 1.0, 2), y_axis=Axis(0.0, 1.0, 2), values=np.ones((2, 2))),
            tmp_path / "plots" / "b.csv",
        )
        write_manifest(
            tmp_path,
            scenario="unit",
            seed=3,
            config={"n_samples": 10},
            artifacts=[(tmp_path / "plots" / "b.csv", "density2d"), (tmp_path / "plots" / "a.csv", "density1d")],
            metrics={"C": 0.5},
        )
        return tmp_path

    def test_contents(self, run_dir):
        data = json.loads((run_dir / MANIFEST_NAME).read_text())
        assert [a["path"] for a in data["artifacts"]] == ["plots/a.csv", "plots/b.csv"]
        assert data["seed"] == 3 and data["metrics"] == {"C": 0.5}
        assert "numpy" in data["versions"]

    def test_intact(self, run_dir):
        assert verify_manifest(run_dir) == []
        assert verify_manifest(run_dir / MANIFEST_NAME) == []

    def test_tampered_artifact(self, run_dir):
        path = run_dir / "plots" / "a.csv"
        path.write_text(path.read_text().replace("1.0", "2.0"))
        assert verify_manifest(run_dir) == ["plots/a.csv"]

    def test_deleted_artifact(self, run_dir):
        (run_dir / "plots" / "b.csv").unlink()
        assert verify_manifest(run_dir) == ["plots/b.csv"]

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ArtifactIOError):
            verify_manifest(tmp_path)


class TestLedger:
    def _record(self, scenario, **kwargs):
        return record_run(
            None,
            scenario=scenario,
            seed=2**63 + 5,
            status="complete",
            exit_code=0,
            output_dir="runs/x",
            n_samples=1000,
            excess_db=26.0,
            metrics={"sigma0_hat": 1.0, "C": 0.99, "D1": 0.998},
            artifacts=[{"path": "plots/a.csv", "kind": "density1d", "sha256": "0" * 64}],
            **kwargs,
        )

    def test_record_and_list(self):
        first = self._record("alpha")
        second = self._record("beta")
        assert first is not None and second > first
        rows = list_runs()
        assert [r["scenario"] for r in rows] == ["beta", "alpha"]
        assert rows[0]["seed"] == str(2**63 + 5)
        assert rows[0]["D1"] == pytest.approx(0.998)
        assert rows[0]["D2"] is None
        assert rows[0]["artifacts"] == 1

    def test_filter_and_limit(self):
        for name in ("a", "b", "a"):
            self._record(name)
        assert len(list_runs(scenario="a")) == 2
        assert len(list_runs(limit=1)) == 1

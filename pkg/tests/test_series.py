import numpy as np
import pytest

from qcollapse.manifest import RunManifest
from qcollapse.series import MeasurementRecord, TrajectorySeries, read_csv, write_csv


def _series(n=11):
    t = np.linspace(0, 1, n)
    dy = np.concatenate(([np.nan], np.arange(1, n, dtype=float)))
    return TrajectorySeries(t=t, q_hat=np.sin(t) / 3, p_hat=t, tau_q2=1 + t, tau_p2=1 / (1 + t), dY=dy)


def test_thinning_sums_record_increments():
    th = _series().thinned(5)
    assert list(th.step) == [0, 5, 10]
    assert np.isnan(th.dY[0])
    assert th.dY[1:].tolist() == [1 + 2 + 3 + 4 + 5, 6 + 7 + 8 + 9 + 10]
    assert _series().thinned(1) is not None


def test_csv_round_trip_is_exact(tmp_path):
    s = _series()
    path = tmp_path / "s.csv"
    write_csv(s, path)
    back = read_csv(path)
    for name, col in s.columns().items():
        assert np.array_equal(col, back.columns()[name], equal_nan=True), name


def test_truncated_and_heisenberg_ratio():
    s = _series()
    assert len(s.truncated(4)) == 4
    assert s.heisenberg_ratio(1.0) == pytest.approx(4.0)


def test_record_coarsening():
    rec = MeasurementRecord(0.1, np.arange(6.0), seed=1)
    c = rec.coarsened(3)
    assert c.dt == pytest.approx(0.3)
    assert c.increments.tolist() == [3.0, 12.0]
    assert c.seed == 1


def test_manifest_round_trip(tmp_path):
    m = RunManifest("simulate", {"m": 1.0}, {"dt": 1e-3}, 4, "em", ["qcollapse", "simulate"],
                    notes={"x": [1, 2]})
    path = tmp_path / "run.manifest"
    m.write(path)
    lines = path.read_text().splitlines()
    assert [l.split(":")[0] for l in lines] == [
        "command", "params", "config", "seed", "scheme", "command_line", "code_version",
        "start_time", "end_time", "status", "notes"]
    assert RunManifest.read(path) == m

import math

import pandas as pd
import pytest

from apps.backend.core.errors import ValidationError
from apps.backend.monitoring.monitoring import (
    MetricsCollector,
    ResultRecord,
    calculate_metric_trends,
    write_csv,
)


def test_collector_comparisons():
    metrics = MetricsCollector("run", "abc")
    assert metrics.check("residual", 1e-14, 1e-12)
    assert metrics.check("fidelity", 0.999, 0.99, "ge")
    assert metrics.check("dim", 1, 1, "eq")
    assert not metrics.check("charge", 1e-3, 1e-12)
    assert not metrics.check("nan_residual", math.nan, 1.0)
    assert not metrics.passed
    assert metrics.failures == ["charge", "nan_residual"]


def test_record_from_collector():
    metrics = MetricsCollector("run", "abc")
    metrics.record("modes", 16)
    metrics.check("residual", 0.0, 1e-12)
    record = metrics.to_record(wall_time=1.5)
    assert record.all_passed
    assert record.metrics == {"modes": 16.0, "residual": 0.0}
    assert record.wall_time == 1.5


def test_record_rejects_non_finite_metrics():
    with pytest.raises(ValidationError):
        ResultRecord("run", "abc", {"fidelity": math.inf})


def test_rows_leave_out_timing_by_default():
    record = ResultRecord("run", "abc", {"x": 1.0}, {"x": True}, wall_time=2.0)
    assert list(record.to_row()) == ["run_id", "config_hash", "x", "x_passed"]
    assert record.to_row(timing=True)["wall_time"] == 2.0


def test_trends():
    trends = calculate_metric_trends([0.5, 0.8, 0.9, 0.95])
    assert trends["non_decreasing"]
    assert not trends["non_increasing"]
    assert trends["trend"] == "increasing"
    assert trends["slope"] > 0
    assert calculate_metric_trends([1.0, 1.0 - 1e-12], tol=1e-9)["non_decreasing"]
    assert not calculate_metric_trends([1.0, 0.9], tol=1e-9)["non_decreasing"]
    assert calculate_metric_trends([0.7])["slope"] == 0.0
    assert calculate_metric_trends([]) == {}


def test_csv_starts_with_schema_version(tmp_path):
    path = write_csv([{"N": 8, "fidelity": 0.9}, {"N": 16, "fidelity": 0.99}], tmp_path / "t.csv",
                     columns=["N", "fidelity", "reason"])
    assert path.read_text().splitlines()[0] == "schema_version,N,fidelity,reason"
    frame = pd.read_csv(path, dtype={"schema_version": str})
    assert list(frame["schema_version"]) == ["1", "1"]
    assert list(frame["N"]) == [8, 16]
    assert frame["reason"].isna().all()


def test_csv_from_records(tmp_path):
    records = [ResultRecord(f"run{i}", "abc", {"value": float(i)}, {"value": True}) for i in range(3)]
    frame = pd.read_csv(write_csv(records, tmp_path / "sub" / "records.csv"))
    assert list(frame.columns) == ["schema_version", "run_id", "config_hash", "value", "value_passed"]
    assert list(frame["value"]) == [0.0, 1.0, 2.0]

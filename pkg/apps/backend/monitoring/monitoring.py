"""
Result Monitoring Module

This module collects named check metrics of a run, turns them into result
records and writes plot-ready CSV tables with a versioned schema column.
"""

import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd

from apps.backend.core.config import RESULTS_SCHEMA_VERSION
from apps.backend.core.errors import ValidationError
from apps.backend.monitoring.log import get_logger

log = get_logger(__name__)

Comparison = Literal["le", "ge", "eq"]


@dataclass(frozen=True)
class CheckResult:
    """One thresholded metric."""
    name: str
    value: float
    threshold: float
    comparison: Comparison
    passed: bool


@dataclass
class ResultRecord:
    """Named scalar metrics of a single run."""
    run_id: str
    config_hash: str
    metrics: Dict[str, float]
    passed: Dict[str, bool] = field(default_factory=dict)
    wall_time: float = 0.0
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())

    def __post_init__(self) -> None:
        bad = [name for name, value in self.metrics.items() if not math.isfinite(value)]
        if bad:
            raise ValidationError(f"Non-finite metrics in {self.run_id}: {', '.join(bad)}")

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    @property
    def failures(self) -> List[str]:
        return [name for name, ok in self.passed.items() if not ok]

    def to_row(self, timing: bool = False) -> Dict[str, Any]:
        """Flat row; timing columns only when ``timing`` is set."""
        row: Dict[str, Any] = {"run_id": self.run_id, "config_hash": self.config_hash}
        if timing:
            row.update(wall_time=self.wall_time, timestamp=self.timestamp)
        row.update(self.metrics)
        row.update({f"{name}_passed": ok for name, ok in self.passed.items()})
        return row


class MetricsCollector:
    """Accumulates metrics and threshold checks for one run."""

    def __init__(self, run_id: str, config_hash: str):
        self.run_id = run_id
        self.config_hash = config_hash
        self.metrics: Dict[str, float] = {}
        self.checks: List[CheckResult] = []
        self.started = datetime.now()

    def record(self, name: str, value: float) -> float:
        """Store an informational metric without a threshold."""
        self.metrics[name] = float(value)
        return self.metrics[name]

    def check(self, name: str, value: float, threshold: float, comparison: Comparison = "le") -> bool:
        """Store ``value`` and compare it against ``threshold``."""
        value = float(value)
        if comparison == "le":
            ok = value <= threshold
        elif comparison == "ge":
            ok = value >= threshold
        else:
            ok = value == threshold
        ok = bool(ok and math.isfinite(value))
        self.metrics[name] = value
        self.checks.append(CheckResult(name, value, float(threshold), comparison, ok))
        if not ok:
            log.warning("Check failed", run_id=self.run_id, check=name, value=value,
                        threshold=threshold, comparison=comparison)
        return ok

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_record(self, wall_time: Optional[float] = None) -> ResultRecord:
        if wall_time is None:
            wall_time = (datetime.now() - self.started).total_seconds()
        return ResultRecord(
            run_id=self.run_id,
            config_hash=self.config_hash,
            metrics=dict(self.metrics),
            passed={c.name: c.passed for c in self.checks},
            wall_time=float(wall_time),
        )


def calculate_metric_trends(values: Sequence[float], tol: float = 0.0) -> Dict[str, Any]:
    """Mean, spread, fitted slope and monotonicity of a metric over a sweep."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return {}
    diffs = np.diff(values)
    slope = float(np.polyfit(np.arange(values.size), values, 1)[0]) if values.size > 1 else 0.0
    return {
        "mean": float(np.mean(values)),
        "std": float(np.std(values)),
        "slope": slope,
        "trend": "increasing" if slope > 0 else "decreasing",
        "non_decreasing": bool(np.all(diffs >= -tol)),
        "non_increasing": bool(np.all(diffs <= tol)),
    }


def records_frame(records: Sequence[ResultRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in records])


def write_csv(
    table: Union[pd.DataFrame, Sequence[ResultRecord], Sequence[Dict[str, Any]]],
    path: Union[str, Path],
    columns: Optional[Sequence[str]] = None,
) -> Path:
    """
    Write a results table with ``schema_version`` as its first column.

    Args:
        table: DataFrame, result records or plain row dicts
        path: Destination CSV
        columns: Fixed column order (missing columns are left empty)

    Returns:
        Path: The written file
    """
    if isinstance(table, pd.DataFrame):
        frame = table.copy()
    elif table and isinstance(table[0], ResultRecord):
        frame = records_frame(table)
    else:
        frame = pd.DataFrame(list(table))
    if columns is not None:
        frame = frame.reindex(columns=list(columns))
    frame.insert(0, "schema_version", RESULTS_SCHEMA_VERSION)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    log.info("Wrote results table", path=str(path), rows=len(frame))
    return path

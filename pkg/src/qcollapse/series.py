"""Per-step trajectory tables, measurement records and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

CSV_COLUMNS = ("step", "t", "q_hat", "p_hat", "tau_q2", "tau_p2",
               "dY", "norm_drift", "fit_residual")


@dataclass(frozen=True)
class MeasurementRecord:
    """Record increments ``dY`` over consecutive steps of length ``dt``."""

    dt: float
    increments: np.ndarray
    seed: int | None = None
    trajectory_index: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt", f"must be > 0, got {self.dt}")
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.ndim != 1 or inc.size < 1:
            raise ValidationError("increments", "record needs at least one increment")
        object.__setattr__(self, "increments", inc)

    def __len__(self):
        return self.increments.size

    def coarsened(self, factor):
        n = len(self) // factor
        inc = self.increments[: n * factor].reshape(n, factor).sum(axis=1)
        return MeasurementRecord(self.dt * factor, inc, self.seed,
                                 self.trajectory_index, dict(self.provenance))


@dataclass
class TrajectorySeries:
    """Column arrays, one row per step including t=0.

    ``dY[k]`` is the record increment over ``(t[k-1], t[k]]`` (NaN for row 0);
    ``norm_drift`` and ``fit_residual`` are NaN where not computed.
    """

    t: np.ndarray
    q_hat: np.ndarray
    p_hat: np.ndarray
    tau_q2: np.ndarray
    tau_p2: np.ndarray
    dY: np.ndarray
    norm_drift: np.ndarray | None = None
    fit_residual: np.ndarray | None = None
    step: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.t)
        if self.norm_drift is None:
            self.norm_drift = np.full(n, np.nan)
        if self.fit_residual is None:
            self.fit_residual = np.full(n, np.nan)
        if self.step is None:
            self.step = np.arange(n)

    def __len__(self):
        return len(self.t)

    def columns(self):
        return {name: np.asarray(getattr(self, name)) for name in CSV_COLUMNS}

    def truncated(self, n):
        cols = {k: v[:n] for k, v in self.columns().items()}
        return TrajectorySeries(**cols)

    def thinned(self, every):
        """Keep every ``every``-th row; ``dY`` is summed over each window."""
        if every <= 1:
            return self
        keep = np.arange(0, len(self), every)
        cols = {k: v[keep] for k, v in self.columns().items()}
        dy = np.nan_to_num(np.asarray(self.dY), nan=0.0)
        csum = np.concatenate(([0.0], np.cumsum(dy[1:])))
        summed = np.full(keep.size, np.nan)
        summed[1:] = csum[keep[1:]] - csum[keep[:-1]]
        cols["dY"] = summed
        return TrajectorySeries(**cols)

    def heisenberg_ratio(self, hbar):
        """Minimum over rows of ``tau_q2*tau_p2 / (hbar**2/4)``."""
        return float(np.min(self.tau_q2 * self.tau_p2) / (hbar ** 2 / 4))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else format(v, ".17g")


def write_csv(series: TrajectorySeries, path):
    cols = series.columns()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(len(series)):
            writer.writerow(_fmt(cols[c][i]) if c != "step" else str(int(cols[c][i]))
                            for c in CSV_COLUMNS)


def read_csv(path) -> TrajectorySeries:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValidationError("csv", f"unexpected header {header}")
        rows = list(reader)
    data = {c: np.array([float(r[i]) if r[i] != "" else np.nan for r in rows])
            for i, c in enumerate(CSV_COLUMNS)}
    data["step"] = data["step"].astype(int)
    return TrajectorySeries(**data)

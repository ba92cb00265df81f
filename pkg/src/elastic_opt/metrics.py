"""Metrics rows, their pinned CSV schema, and run summaries.

Schema (fixed): wall_clock_s,sim_time,center_version,worker_id,objective,
dist_to_opt,disagreement. dist_to_opt and disagreement are empty when
unknown (no x*, or a producer that cannot see all workers); sim_time is
empty for network runs. Rows are time-ordered. worker_id -1 marks rows
describing the center.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError

HEADER = ["wall_clock_s", "sim_time", "center_version", "worker_id", "objective", "dist_to_opt", "disagreement"]


@dataclass(frozen=True)
class MetricsRow:
    wall_clock_s: float
    sim_time: float | None
    center_version: int
    worker_id: int
    objective: float
    dist_to_opt: float | None
    disagreement: float | None

    def cells(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [
            repr(float(self.wall_clock_s)),
            fmt(self.sim_time),
            str(self.center_version),
            str(self.worker_id),
            repr(float(self.objective)),
            fmt(self.dist_to_opt),
            fmt(self.disagreement),
        ]


def rows_from_sim(metric_tuples) -> list[MetricsRow]:
    return [
        MetricsRow(wall, sim_t, version, worker, obj, dist, dis)
        for (wall, sim_t, version, worker, obj, dist, dis) in metric_tuples
    ]


def write_metrics_csv(path, rows: list[MetricsRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for row in rows:
            w.writerow(row.cells())


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        return parse_metrics_csv(fh.read())


def parse_metrics_csv(text: str) -> list[MetricsRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != HEADER:
        raise ParseError(f"bad metrics header: {header}", line=1)
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(HEADER):
            raise ParseError(f"expected {len(HEADER)} cells, got {len(cells)}", line=lineno)
        try:
            rows.append(
                MetricsRow(
                    wall_clock_s=float(cells[0]),
                    sim_time=float(cells[1]) if cells[1] else None,
                    center_version=int(cells[2]),
                    worker_id=int(cells[3]),
                    objective=float(cells[4]),
                    dist_to_opt=float(cells[5]) if cells[5] else None,
                    disagreement=float(cells[6]) if cells[6] else None,
                )
            )
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return rows


@dataclass(frozen=True)
class RunSummary:
    name: str
    p: int | None
    time_to_threshold: float | None
    version_at_threshold: int | None
    final_disagreement: float | None
    speedup: float | None = None


def summarize(named_runs, threshold: float) -> list[RunSummary]:
    """One row per run: first center crossing of the threshold + speedup.

    named_runs: iterable of (name, rows, p) with p optional (None when not
    known). Crossings are read from center rows (worker_id == -1); a run
    whose file has no center rows is scanned whole. speedup = T(1)/T(p) is
    filled when exactly one run has p == 1 and it crossed.
    """
    summaries = []
    for name, rows, p in named_runs:
        center_rows = [r for r in rows if r.worker_id == -1] or list(rows)
        crossing = next((r for r in center_rows if r.objective <= threshold), None)
        final_dis = next((r.disagreement for r in reversed(center_rows) if r.disagreement is not None), None)
        summaries.append(
            RunSummary(
                name=name,
                p=p,
                time_to_threshold=crossing.wall_clock_s if crossing else None,
                version_at_threshold=crossing.center_version if crossing else None,
                final_disagreement=final_dis,
            )
        )
    base = [s for s in summaries if s.p == 1 and s.time_to_threshold is not None]
    if len(base) == 1:
        t1 = base[0].time_to_threshold
        summaries = [
            RunSummary(s.name, s.p, s.time_to_threshold, s.version_at_threshold,
                       s.final_disagreement, t1 / s.time_to_threshold)
            if s.time_to_threshold is not None and s.time_to_threshold > 0
            else s
            for s in summaries
        ]
    return summaries


def summary_csv(summaries: list[RunSummary]) -> str:
    lines = ["run,p,time_to_threshold,center_version,final_disagreement,speedup"]
    for s in summaries:
        cells = [
            s.name,
            "" if s.p is None else str(s.p),
            "" if s.time_to_threshold is None else f"{s.time_to_threshold:.6g}",
            "" if s.version_at_threshold is None else str(s.version_at_threshold),
            "" if s.final_disagreement is None else f"{s.final_disagreement:.6g}",
            "" if s.speedup is None else f"{s.speedup:.4f}",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def averaged_iterate(snapshots, burn_in_fraction: float = 0.5) -> np.ndarray:
    """Arithmetic mean of the post-burn-in center snapshots."""
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ConfigError("burn_in_fraction must be in [0, 1)")
    snaps = [np.asarray(s, dtype=np.float64) for s in snapshots]
    if not snaps:
        raise ConfigError("averaged_iterate needs at least one snapshot")
    start = int(len(snaps) * burn_in_fraction)
    if start >= len(snaps):
        start = len(snaps) - 1
    return np.mean(np.stack(snaps[start:]), axis=0)

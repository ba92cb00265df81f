"""Time-to-threshold speedup harness.

For each requested worker count p the harness launches one center and p
workers as OS processes, then polls the center's metrics CSV until the
full-data objective first drops below the threshold. The crossing time is
the center-reported wall clock, measured from its first accepted connection
so interpreter startup does not skew small-p baselines. speedup(p) =
T(1)/T(p).

The threshold must be reachable: a fast simulator pilot (p=1, same kernels,
no artificial gradient cost) validates it before any process is spawned.
"""

from __future__ import annotations

import logging
import socket
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError, TimeoutError
from ..metrics import read_metrics_csv
from ..sim import SimConfig, Schedule, run_sim
from . import worker as worker_mod

log = logging.getLogger("elastic_opt.speedup")


@dataclass(frozen=True)
class SpeedupRow:
    p: int
    time_to_threshold_s: float | None
    center_version: int | None
    reached: bool
    speedup: float | None = None


def rows_to_csv(rows: list[SpeedupRow]) -> str:
    lines = ["p,time_to_threshold_s,center_version,speedup,reached"]
    for r in rows:
        lines.append(
            ",".join(
                [
                    str(r.p),
                    "" if r.time_to_threshold_s is None else f"{r.time_to_threshold_s:.4f}",
                    "" if r.center_version is None else str(r.center_version),
                    "" if r.speedup is None else f"{r.speedup:.4f}",
                    "yes" if r.reached else "no",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def pilot_check(cfg) -> None:
    """p=1 simulator run: every iterate the net worker would produce."""
    sim_cfg = SimConfig(
        algorithm=cfg.algorithm,
        hp=cfg.hyper_params_p(1),
        problem=cfg.build_problem(),
        schedule=Schedule(kind="round_robin"),
        T=cfg.T,
        seed=cfg.seed,
        cadence=1,
        batch_size=cfg.batch_size,
        comm_order=cfg.comm_order,
        init_scale=cfg.init_scale,
    )
    result = run_sim(sim_cfg)
    best = min(row[4] for row in result.metrics)
    if best > cfg.threshold:
        raise ConfigError(
            f"pilot (p=1, T={cfg.T}) never reached threshold {cfg.threshold:.6g}; "
            f"best objective {best:.6g}"
        )


def _write_role_configs(cfg, p: int, port: int, run_dir: Path) -> tuple[Path, list[Path]]:
    base = {
        "seed": cfg.seed,
        "problem": cfg.problem,
        "dim": cfg.dim,
        "condition_number": cfg.condition_number,
        "noise_sigma": cfg.noise_sigma,
        "n_samples": cfg.n_samples,
        "separation": cfg.separation,
        "l2": cfg.l2,
        "hidden": cfg.hidden,
        "csv_path": cfg.csv_path,
    }

    def dump(path: Path, extra: dict) -> Path:
        lines = [f"{k}={_fmt(v)}" for k, v in {**base, **extra}.items() if v != ""]
        path.write_text("\n".join(lines) + "\n")
        return path

    center = dump(
        run_dir / "center.cfg",
        {
            "mode": "net-center",
            "bind": f"127.0.0.1:{port}",
            "threshold": cfg.threshold,
            "poll_interval_s": cfg.poll_interval_s,
            "out_dir": str(run_dir / "center"),
        },
    )
    workers = []
    for i in range(p):
        workers.append(
            dump(
                run_dir / f"worker{i}.cfg",
                {
                    "mode": "net-worker",
                    "connect": f"127.0.0.1:{port}",
                    "worker_id": i,
                    "algorithm": cfg.algorithm,
                    "eta": cfg.eta,
                    "rho": cfg.rho,
                    "tau": cfg.tau,
                    "p": p,
                    "delta": cfg.delta,
                    "comm_order": cfg.comm_order,
                    "batch_size": cfg.batch_size,
                    "T": cfg.T,
                    "cadence": cfg.cadence,
                    "init_scale": cfg.init_scale,
                    "grad_sleep_ms": cfg.grad_sleep_ms,
                    "out_dir": str(run_dir / f"worker{i}"),
                },
            )
        )
    return center, workers


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _poll_for_crossing(metrics_path: Path, threshold: float, deadline: float):
    while time.monotonic() < deadline:
        time.sleep(0.05)
        if not metrics_path.exists():
            continue
        try:
            rows = read_metrics_csv(metrics_path)
        except Exception:  # row mid-write; retry next poll
            continue
        for row in rows:
            if row.objective <= threshold:
                return row
    return None


def speedup_run(cfg, out_dir: Path) -> list[SpeedupRow]:
    pilot_check(cfg)
    rows: list[SpeedupRow] = []
    for p in cfg.p_list:
        run_dir = out_dir / f"p{p}"
        run_dir.mkdir(parents=True, exist_ok=True)
        port = free_port()
        center_cfg, worker_cfgs = _write_role_configs(cfg, p, port, run_dir)
        metrics_path = run_dir / "center" / "center_metrics.csv"
        procs = [_spawn(center_cfg)]
        try:
            for wc in worker_cfgs:
                procs.append(_spawn(wc))
            deadline = time.monotonic() + cfg.budget_s
            crossing = _poll_for_crossing(metrics_path, cfg.threshold, deadline)
        finally:
            try:
                worker_mod.send_shutdown(("127.0.0.1", port))
            except OSError:
                pass
            for proc in procs:
                if proc.poll() is None:
                    proc.terminate()
            for proc in procs:
                try:
                    proc.wait(timeout=10)
                except subprocess.TimeoutExpired:
                    proc.kill()
        if crossing is None:
            rows.append(SpeedupRow(p, None, None, False))
            log.warning("p=%d: threshold not reached within %.1fs budget", p, cfg.budget_s)
        else:
            rows.append(SpeedupRow(p, crossing.wall_clock_s, crossing.center_version, True))
            log.info("p=%d: reached threshold at %.3fs", p, crossing.wall_clock_s)
    t1 = next((r.time_to_threshold_s for r in rows if r.p == 1 and r.reached), None)
    if t1 is not None:
        rows = [
            SpeedupRow(r.p, r.time_to_threshold_s, r.center_version, r.reached,
                       t1 / r.time_to_threshold_s if r.reached and r.time_to_threshold_s else None)
            for r in rows
        ]
    return rows


def unreached(rows: list[SpeedupRow]) -> list[int]:
    return [r.p for r in rows if not r.reached]


def _spawn(cfg_path: Path) -> subprocess.Popen:
    return subprocess.Popen(
        [sys.executable, "-m", "elastic_opt.cli", "run", str(cfg_path)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )

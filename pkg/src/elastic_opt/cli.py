"""`elastic-opt` command line: run experiment configs, summarize metrics.

    elastic-opt run <config>
    elastic-opt summarize <glob> [<glob> ...] --threshold V [--out FILE]

Exit codes for `run`: 0 success, 2 config/validation error, 3 diverged,
4 threshold timeout. EAVG_SEED overrides the config seed; EAVG_LOG sets the
logging level (e.g. DEBUG).
"""

from __future__ import annotations

import argparse
import glob as globmod
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics as met
from . import stability as stab
from .config import ExperimentConfig, load_config, parse_address, resolved_text
from .errors import ConfigError, DivergedError, ElasticOptError, ParseError, TimeoutError
from .sim import events_to_text, run_sim

log = logging.getLogger("elastic_opt.cli")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="elastic-opt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a key=value config file")
    p_sum = sub.add_parser("summarize", help="time-to-threshold summary over metrics CSVs")
    p_sum.add_argument("globs", nargs="+", help="metrics CSV paths or globs")
    p_sum.add_argument("--threshold", type=float, required=True)
    p_sum.add_argument("--out", default=None, help="write the summary CSV here (default stdout)")
    args = parser.parse_args(argv)

    _setup_logging()
    try:
        if args.command == "run":
            return run(args.config)
        return summarize_cmd(args.globs, args.threshold, args.out)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3
    except TimeoutError as exc:
        print(f"timeout: {exc}", file=sys.stderr)
        return 4


def _setup_logging() -> None:
    level = os.environ.get("EAVG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def run(config_path: str) -> int:
    cfg = load_config(config_path)
    env_seed = os.environ.get("EAVG_SEED")
    if env_seed is not None and "seed" in cfg.values:
        cfg = ExperimentConfig({**cfg.values, "seed": int(env_seed)})
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config").write_text(resolved_text(cfg))

    dispatch = {
        "sim": _run_sim_mode,
        "stability": _run_stability_mode,
        "net-center": _run_center_mode,
        "net-worker": _run_worker_mode,
        "speedup": _run_speedup_mode,
    }
    dispatch[cfg.mode](cfg, out_dir)
    return 0


def _run_sim_mode(cfg: ExperimentConfig, out_dir: Path) -> None:
    result = run_sim(cfg.sim_config())
    rows = met.rows_from_sim(result.metrics)
    metrics_path = out_dir / "metrics.csv"
    met.write_metrics_csv(metrics_path, rows)
    met.read_metrics_csv(metrics_path)  # self-validation pass
    (out_dir / "events.log").write_text(events_to_text(result.events))
    if cfg.record_snapshots and result.snapshots:
        avg = met.averaged_iterate(result.snapshots, cfg.burn_in_fraction)
        (out_dir / "averaged_center.csv").write_text(
            ",".join(repr(float(v)) for v in avg) + "\n"
        )
    final = rows[-1]
    print(f"sim done: T={cfg.T} objective={final.objective:.6g} "
          f"center_version={final.center_version} metrics={metrics_path}")


def _run_stability_mode(cfg: ExperimentConfig, out_dir: Path) -> None:
    eta_h = stab.grid_axis(cfg.eta_h_min, cfg.eta_h_max, cfg.eta_h_step)
    alpha = stab.grid_axis(cfg.alpha_min, cfg.alpha_max, cfg.alpha_step)
    algorithm = cfg.algorithm if cfg.algorithm != "easgd_async" else "easgd_rr"
    grid = stab.scan_stability(algorithm, cfg.p, eta_h, alpha, tau=cfg.tau)
    grid_path = out_dir / "grid.csv"
    grid_path.write_text(grid.to_csv())
    _validate_simple_csv(grid_path, "eta_h,alpha,radius,stable")
    print(f"stability scan: {algorithm} p={cfg.p} cells={eta_h.size * alpha.size} "
          f"unstable={int((~grid.stable).sum())} -> {grid_path}")
    if cfg.compare_admm:
        report = stab.compare_easgd_admm(cfg.p, eta_h, alpha)
        (out_dir / "compare.csv").write_text(report.to_csv())
        (out_dir / "compare_summary.txt").write_text(report.summary())
        print(report.summary(), end="")


def _run_center_mode(cfg: ExperimentConfig, out_dir: Path) -> None:
    from .net.center import CenterServer

    problem = cfg.build_problem()
    server = CenterServer(
        bind=parse_address(cfg.bind),
        dim=problem.dim,
        metrics_path=out_dir / "center_metrics.csv",
        problem=problem,
        poll_interval_s=cfg.poll_interval_s,
    )
    print(f"center listening on {server.address[0]}:{server.address[1]} dim={problem.dim}")
    final = server.serve_forever()
    print(f"center stopped at version {final.version}")


def _run_worker_mode(cfg: ExperimentConfig, out_dir: Path) -> None:
    from .net.worker import WorkerConfig, run_worker

    problem = cfg.build_problem()
    wc = WorkerConfig(
        algorithm=cfg.algorithm,
        hp=cfg.hyper_params(),
        problem=problem,
        worker_id=cfg.worker_id,
        T=cfg.T,
        seed=cfg.seed,
        batch_size=cfg.batch_size,
        comm_order=cfg.comm_order,
        cadence=cfg.cadence,
        init_scale=cfg.init_scale,
        grad_sleep_s=cfg.grad_sleep_ms / 1000.0,
        metrics_path=str(out_dir / f"worker{cfg.worker_id}_metrics.csv"),
        retry_max=cfg.retry_max,
        retry_backoff_s=cfg.retry_backoff_s,
    )
    ws = run_worker(parse_address(cfg.connect), wc)
    print(f"worker {cfg.worker_id} finished {ws.t} steps; |x| = {float(np.linalg.norm(ws.x)):.6g}")


def _run_speedup_mode(cfg: ExperimentConfig, out_dir: Path) -> None:
    from .net.speedup import rows_to_csv, speedup_run, unreached

    rows = speedup_run(cfg, out_dir)
    table_path = out_dir / "speedup.csv"
    table_path.write_text(rows_to_csv(rows))
    _validate_simple_csv(table_path, "p,time_to_threshold_s,center_version,speedup,reached")
    print(rows_to_csv(rows), end="")
    missing = unreached(rows)
    if missing:
        raise TimeoutError(f"threshold unreached for p in {missing} within {cfg.budget_s}s")


def _validate_simple_csv(path: Path, header: str) -> None:
    lines = path.read_text().splitlines()
    if not lines or lines[0] != header:
        raise ParseError(f"{path}: bad header {lines[:1]}", line=1)
    width = len(header.split(","))
    for i, line in enumerate(lines[1:], start=2):
        if line and len(line.split(",")) != width:
            raise ParseError(f"{path}: expected {width} cells", line=i)


def summarize_cmd(globs: list[str], threshold: float, out: str | None) -> int:
    paths: list[str] = []
    for g in globs:
        hits = sorted(globmod.glob(g))
        paths.extend(hits if hits else [g])
    named_runs = []
    for path in paths:
        rows = met.read_metrics_csv(path)
        named_runs.append((path, rows, _sibling_p(Path(path))))
    summaries = met.summarize(named_runs, threshold)
    text = met.summary_csv(summaries)
    if out:
        Path(out).write_text(text)
        print(f"wrote {out}")
    else:
        print(text, end="")
    return 0


def _sibling_p(metrics_path: Path):
    cfg_path = metrics_path.parent / "resolved_config"
    if not cfg_path.exists():
        return None
    for line in cfg_path.read_text().splitlines():
        if line.startswith("p="):
            try:
                return int(line.split("=", 1)[1])
            except ValueError:
                return None
    return None


if __name__ == "__main__":
    sys.exit(main())

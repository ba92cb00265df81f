"""Worker client: the simulator's kernels driven over TCP.

Every tau-th local step does a blocking FETCH -> compute -> PUSH -> ACK
round trip, so a single worker's arithmetic is identical to the simulator's
(the center applies pushes serially, and float64 vectors cross the wire
losslessly). Elastic pushes are elided entirely when alpha == 0: the
elastic difference is exactly zero, the worker's trajectory is plain SGD,
and the center version stays untouched.
"""

from __future__ import annotations

import csv
import logging
import socket
import time
from dataclasses import dataclass, field

import numpy as np

from .. import algorithms as alg
from ..errors import DivergedError, WorkerAbort
from ..metrics import HEADER, MetricsRow
from ..sim import DIVERGENCE_LIMIT, build_worker_states
from . import protocol as proto

log = logging.getLogger("elastic_opt.worker")

RETRY_MAX = 5
RETRY_BACKOFF_S = 0.1


@dataclass
class WorkerConfig:
    algorithm: str                  # easgd_async | eamsgd | downpour
    hp: alg.HyperParams
    problem: object
    worker_id: int
    T: int
    seed: int
    batch_size: int = 1
    comm_order: str = "before"
    cadence: int = 100
    init_scale: float = 1.0
    grad_sleep_s: float = 0.0
    metrics_path: str | None = None
    retry_max: int = RETRY_MAX
    retry_backoff_s: float = RETRY_BACKOFF_S


class _Connection:
    """Round-trip helper with reconnect + documented exponential backoff."""

    def __init__(self, address, retry_max: int, backoff_s: float):
        self.address = address
        self.retry_max = retry_max
        self.backoff_s = backoff_s
        self.sock: socket.socket | None = None

    def _connect(self, step: int) -> None:
        for attempt in range(self.retry_max):
            try:
                self.sock = socket.create_connection(self.address, timeout=30)
                return
            except OSError as exc:
                log.warning("connect attempt %d failed: %s", attempt + 1, exc)
                time.sleep(self.backoff_s * (2**attempt))
        raise WorkerAbort(f"could not reach center at {self.address}", step)

    def round_trip(self, frame: proto.Frame, step: int) -> proto.Frame:
        for attempt in range(self.retry_max):
            if self.sock is None:
                self._connect(step)
            try:
                proto.send_frame(self.sock, frame)
                reply = proto.recv_frame(self.sock)
            except (ConnectionError, OSError) as exc:
                log.warning("round trip failed at step %d (%s); reconnecting", step, exc)
                self.close()
                time.sleep(self.backoff_s * (2**attempt))
                continue
            if reply.type == proto.TYPE_ERROR:
                raise WorkerAbort(f"center rejected frame: {reply.text}", step)
            return reply
        raise WorkerAbort(f"round trip kept failing after {self.retry_max} attempts", step)

    def close(self) -> None:
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
            self.sock = None


def run_worker(address, cfg: WorkerConfig) -> alg.WorkerState:
    """Execute cfg.T local steps against the center at `address`."""
    if cfg.algorithm not in ("easgd_async", "eamsgd", "downpour"):
        raise WorkerAbort(f"network runtime supports async algorithms only, not {cfg.algorithm}", 0)
    ws = build_worker_states(cfg.seed, cfg.hp.p, cfg.problem, cfg.init_scale)[cfg.worker_id]
    acc = np.zeros(cfg.problem.dim)
    conn = _Connection(address, cfg.retry_max, cfg.retry_backoff_s)
    last_version = 0
    rows = []
    t_start = time.monotonic()

    def note_metrics(final=False):
        if cfg.metrics_path is None:
            return
        if final or ws.t % cfg.cadence == 0:
            x_star = getattr(cfg.problem, "x_star", None)
            rows.append(
                MetricsRow(
                    wall_clock_s=time.monotonic() - t_start,
                    sim_time=None,
                    center_version=last_version,
                    worker_id=cfg.worker_id,
                    objective=cfg.problem.exact_loss(ws.x),
                    dist_to_opt=float(np.linalg.norm(ws.x - x_star)) if x_star is not None else None,
                    disagreement=None,
                )
            )

    try:
        for _ in range(cfg.T):
            due = (ws.t + 1) % cfg.hp.tau == 0
            if cfg.grad_sleep_s > 0:
                time.sleep(cfg.grad_sleep_s)
            if cfg.algorithm in ("easgd_async", "eamsgd"):
                step = alg.easgd_async_worker_step if cfg.algorithm == "easgd_async" else alg.eamsgd_worker_step
                if due and cfg.hp.alpha == 0.0:
                    # decoupled worker: skip the fetch, elide the zero push
                    ws, _ = step(ws, ws.x, cfg.problem, cfg.hp, cfg.batch_size, cfg.comm_order)
                elif due:
                    reply = conn.round_trip(proto.Frame(proto.TYPE_FETCH), ws.t)
                    last_version = reply.center_version
                    ws, e = step(ws, reply.vector, cfg.problem, cfg.hp, cfg.batch_size, cfg.comm_order)
                    conn.round_trip(proto.Frame(proto.TYPE_PUSH_ELASTIC, vector=e), ws.t)
                else:
                    ws, _ = step(ws, None, cfg.problem, cfg.hp, cfg.batch_size, cfg.comm_order)
            else:  # downpour
                ws, acc, push = alg.downpour_worker_step(ws, acc, cfg.problem, cfg.hp, cfg.batch_size)
                if push is not None:
                    conn.round_trip(proto.Frame(proto.TYPE_PUSH_GRAD, vector=push), ws.t)
                    reply = conn.round_trip(proto.Frame(proto.TYPE_FETCH), ws.t)
                    last_version = reply.center_version
                    ws = alg.downpour_fetch(ws, reply.vector)
            if np.max(np.abs(ws.x)) > DIVERGENCE_LIMIT:
                raise DivergedError(f"worker {cfg.worker_id} diverged at step {ws.t}", ws.t)
            note_metrics()
        note_metrics(final=True)
    finally:
        conn.close()
        if cfg.metrics_path is not None:
            with open(cfg.metrics_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(HEADER)
                for row in rows:
                    w.writerow(row.cells())
    return ws


def send_shutdown(address) -> None:
    with socket.create_connection(address, timeout=10) as sock:
        proto.send_frame(sock, proto.Frame(proto.TYPE_SHUTDOWN))
        proto.recv_frame(sock)

"""Center server: owns the center variable, serializes every mutation.

One handler thread per connection; every read and write of the center state
goes through a single apply queue drained by one applier thread, so pushes
are linearized in arrival order and a FETCH snapshot is always a consistent
post-apply value. An optional monitor thread evaluates the full-data
objective every poll interval and appends metrics rows (worker_id -1) with
wall clock measured from the first accepted connection.
"""

from __future__ import annotations

import csv
import logging
import queue
import socket
import threading
import time

import numpy as np

from .. import algorithms as alg
from ..metrics import HEADER, MetricsRow
from . import protocol as proto

log = logging.getLogger("elastic_opt.center")


class CenterServer:
    def __init__(
        self,
        bind: tuple[str, int],
        dim: int,
        initial=None,
        metrics_path=None,
        problem=None,
        poll_interval_s: float = 0.02,
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        x0 = np.zeros(dim) if initial is None else np.array(initial, dtype=np.float64)
        self.center = alg.CenterState(x0, 0)
        self.dim = dim
        self.problem = problem
        self.metrics_path = metrics_path
        self.poll_interval_s = poll_interval_s
        self._applies = queue.Queue()
        self._stop = threading.Event()
        self._first_connection_at: float | None = None
        self._lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._listener = socket.create_server(bind)
        self.address = self._listener.getsockname()

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._spawn(self._apply_loop, "center-apply")
        if self.metrics_path is not None and self.problem is not None:
            self._spawn(self._monitor_loop, "center-monitor")
        self._spawn(self._accept_loop, "center-accept")

    def serve_forever(self) -> alg.CenterState:
        self.start()
        self._stop.wait()
        return self.shutdown()

    def shutdown(self) -> alg.CenterState:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        for t in self._threads:
            t.join(timeout=5)
        return self.center

    def _spawn(self, target, name) -> None:
        t = threading.Thread(target=target, name=name, daemon=True)
        t.start()
        self._threads.append(t)

    # -- serialized state access --------------------------------------------

    def _apply_loop(self) -> None:
        while not self._stop.is_set():
            try:
                op, payload, reply = self._applies.get(timeout=0.1)
            except queue.Empty:
                continue
            if op == "push":
                self.center = alg.center_apply_elastic(self.center, payload)
                reply.put(self.center.version)
            elif op == "fetch":
                reply.put((self.center.version, np.array(self.center.x_tilde)))

    def _submit(self, op: str, payload=None):
        reply: queue.Queue = queue.Queue(maxsize=1)
        self._applies.put((op, payload, reply))
        return reply.get()

    # -- networking ----------------------------------------------------------

    def _accept_loop(self) -> None:
        self._listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, peer = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with self._lock:
                if self._first_connection_at is None:
                    self._first_connection_at = time.monotonic()
            self._spawn(lambda c=conn, p=peer: self._serve_client(c, p), f"center-conn-{peer}")

    def _serve_client(self, conn: socket.socket, peer) -> None:
        try:
            with conn:
                while not self._stop.is_set():
                    try:
                        frame = proto.recv_frame(conn)
                    except ConnectionError:
                        return
                    except proto.ProtocolError as exc:
                        proto.send_frame(conn, proto.Frame(proto.TYPE_ERROR, text=str(exc)))
                        return
                    if frame.type == proto.TYPE_FETCH:
                        version, snapshot = self._submit("fetch")
                        proto.send_frame(
                            conn,
                            proto.Frame(proto.TYPE_FETCH_REPLY, vector=snapshot, center_version=version),
                        )
                    elif frame.type in (proto.TYPE_PUSH_ELASTIC, proto.TYPE_PUSH_GRAD):
                        if frame.vector.shape[0] != self.dim:
                            proto.send_frame(
                                conn,
                                proto.Frame(
                                    proto.TYPE_ERROR,
                                    text=f"dim mismatch: payload {frame.vector.shape[0]}, center {self.dim}",
                                ),
                            )
                            return
                        self._submit("push", frame.vector)
                        proto.send_frame(conn, proto.Frame(proto.TYPE_ACK))
                    elif frame.type == proto.TYPE_SHUTDOWN:
                        proto.send_frame(conn, proto.Frame(proto.TYPE_ACK))
                        self._stop.set()
                        return
                    else:
                        proto.send_frame(
                            conn, proto.Frame(proto.TYPE_ERROR, text=f"unexpected type 0x{frame.type:02x}")
                        )
                        return
        except OSError as exc:
            log.debug("connection %s dropped: %s", peer, exc)

    # -- metrics --------------------------------------------------------------

    def _monitor_loop(self) -> None:
        with open(self.metrics_path, "w", newline="", buffering=1) as fh:
            writer = csv.writer(fh)
            writer.writerow(HEADER)
            while not self._stop.is_set():
                time.sleep(self.poll_interval_s)
                with self._lock:
                    t0 = self._first_connection_at
                if t0 is None:
                    continue
                version, snapshot = self._submit("fetch")
                x_star = getattr(self.problem, "x_star", None)
                row = MetricsRow(
                    wall_clock_s=time.monotonic() - t0,
                    sim_time=None,
                    center_version=version,
                    worker_id=-1,
                    objective=self.problem.exact_loss(snapshot),
                    dist_to_opt=float(np.linalg.norm(snapshot - x_star)) if x_star is not None else None,
                    disagreement=None,
                )
                writer.writerow(row.cells())


def serve_center(bind, dim, initial=None, metrics_path=None, problem=None, poll_interval_s=0.02):
    """Run a center to completion (returns the final CenterState on SHUTDOWN)."""
    server = CenterServer(bind, dim, initial, metrics_path, problem, poll_interval_s)
    return server.serve_forever()

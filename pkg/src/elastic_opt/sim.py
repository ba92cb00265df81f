"""Deterministic single-process simulation of p workers and one center.

Simulated time (not wall time) drives the schedule, so every run is a pure
function of its config. Events are logged as (time, worker, kind,
center_version-after-event); simultaneous events are ordered by worker id,
and within one worker iteration a communication is logged before the
gradient step that follows it. The center applies elastic updates in event
order; a worker's snapshot is the center value at its comm event time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from . import algorithms as alg
from .core import check_finite
from .errors import ConfigError, DivergedError, ReplayMismatchError
from .problems import shard as make_shards
from .rng import RngState, normal_block, substream

DIVERGENCE_LIMIT = 1e12

ALGORITHMS = ("easgd_sync", "easgd_async", "eamsgd", "downpour", "sgd", "msgd", "admm_rr", "admm_rr_grad")
CENTERLESS = ("sgd", "msgd")


@dataclass(frozen=True)
class Schedule:
    """Per-worker step-duration law.

    kind: sync (lockstep rounds), round_robin (strict cyclic visits,
    sequentially timed), async_random (workers run concurrently, each step's
    duration fixed or seeded-exponential with the worker's mean cost).
    """

    kind: str = "round_robin"
    costs: tuple[float, ...] | float = 1.0
    law: str = "fixed"
    seed: int = 0

    def cost_of(self, worker: int) -> float:
        c = self.costs[worker] if isinstance(self.costs, tuple) else self.costs
        if c <= 0:
            raise ConfigError("schedule costs must be > 0")
        return float(c)


@dataclass(frozen=True)
class SimEvent:
    time: float
    worker: int          # -1 = center (sync aggregate apply)
    kind: str            # grad_step | comm
    center_version: int  # after the event

    def line(self) -> str:
        return f"{self.time!r},{self.worker},{self.kind},{self.center_version}"


def parse_event_line(line: str, lineno: int = 0) -> SimEvent:
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise ConfigError(f"event line {lineno}: expected 4 fields, got {len(parts)}")
    return SimEvent(float(parts[0]), int(parts[1]), parts[2], int(parts[3]))


def events_to_text(events: list[SimEvent]) -> str:
    return "".join(ev.line() + "\n" for ev in events)


def events_from_text(text: str) -> list[SimEvent]:
    return [parse_event_line(ln, i + 1) for i, ln in enumerate(text.splitlines()) if ln.strip()]


@dataclass(frozen=True)
class SimConfig:
    algorithm: str
    hp: alg.HyperParams
    problem: object
    schedule: Schedule
    T: int
    seed: int = 0
    cadence: int = 10
    batch_size: int = 1
    comm_order: str = "before"
    init_scale: float = 1.0
    initial_workers: tuple | None = None   # optional explicit x0 per worker
    initial_center: np.ndarray | None = None
    record_stacked: bool = False           # stacked state per round (dim-1 problems)
    record_snapshots: bool = False         # center snapshot at each metrics row

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm '{self.algorithm}'")
        if self.T < 0:
            raise ConfigError("T must be >= 0")
        if self.cadence < 1:
            raise ConfigError("cadence must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.comm_order not in ("before", "after"):
            raise ConfigError(f"comm_order must be before|after, got '{self.comm_order}'")
        if self.schedule.kind not in ("sync", "round_robin", "async_random"):
            raise ConfigError(f"unknown schedule kind '{self.schedule.kind}'")
        if self.schedule.law not in ("fixed", "exp"):
            raise ConfigError(f"unknown duration law '{self.schedule.law}'")
        if isinstance(self.schedule.costs, tuple) and len(self.schedule.costs) != self.hp.p:
            raise ConfigError("schedule costs list length != p")
        if self.algorithm == "easgd_sync" and self.schedule.kind != "sync":
            raise ConfigError("easgd_sync requires the sync schedule")
        if self.algorithm in ("easgd_async", "eamsgd", "downpour") and self.schedule.kind == "sync":
            raise ConfigError(f"{self.algorithm} requires round_robin or async_random schedule")
        if self.algorithm in ("admm_rr", "admm_rr_grad"):
            if self.schedule.kind != "round_robin":
                raise ConfigError("admm variants require the round_robin schedule")
            if getattr(self.problem, "dim", None) != 1:
                raise ConfigError("admm variants are defined on the 1-D quadratic only")
            if getattr(self.problem, "noise_sigma", 0.0) != 0.0:
                raise ConfigError("admm variants exclude the gradient-noise model")
        if self.record_stacked and getattr(self.problem, "dim", None) != 1:
            raise ConfigError("record_stacked requires a 1-D problem")


@dataclass
class SimResult:
    workers: list
    center: alg.CenterState
    metrics: list
    events: list[SimEvent]
    stacked: list[np.ndarray] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)


def disagreement(workers: list[alg.WorkerState]) -> float:
    """(1/p) sum_i ||x_i - mean||^2 - zero iff all workers agree."""
    if not workers:
        raise ConfigError("disagreement of zero workers")
    xs = np.stack([w.x for w in workers])
    centered = xs - xs.mean(axis=0)
    return float(np.mean(np.sum(centered * centered, axis=1)))


def build_worker_states(seed: int, p: int, problem, init_scale: float = 1.0, initial_workers=None):
    """Seeded initial workers, identical for the simulator and the network
    runtime: shard seed, per-worker sampling stream, and x0 are all pure
    functions of (seed, p, problem)."""
    dim = problem.dim
    shards = make_shards(problem.n_samples, p, substream(seed, 0x7368))
    workers = []
    for i in range(p):
        if initial_workers is not None:
            x0 = np.array(initial_workers[i], dtype=np.float64)
        else:
            x0 = init_scale * normal_block(substream(seed, 0x696E69 + i), 0, dim)
        workers.append(alg.make_worker(x0, shards[i], substream(seed, i)))
    return workers


def _initial_states(cfg: SimConfig):
    workers = build_worker_states(cfg.seed, cfg.hp.p, cfg.problem, cfg.init_scale, cfg.initial_workers)
    dim = cfg.problem.dim
    if cfg.initial_center is not None:
        xt0 = np.array(cfg.initial_center, dtype=np.float64)
    else:
        xt0 = np.zeros(dim)
    center = alg.CenterState(check_finite(xt0, "initial center"), 0)
    return workers, center


def _admm_initial(cfg: SimConfig, workers):
    return [
        alg.AdmmWorkerState(x=w.x, lam=np.zeros_like(w.x))
        for w in workers
    ]


class _Metrics:
    """Emits a row whenever the cadence counter crosses a multiple."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rows = []
        self.snapshots = []
        self._last_bucket = -1

    def maybe_emit(self, counter: int, sim_time: float, workers, center, final=False):
        bucket = counter // self.cfg.cadence
        if not final and bucket == self._last_bucket:
            return
        if final and self.rows and self.rows[-1][1] == sim_time and self.rows[-1][2] == center.version:
            return
        self._last_bucket = bucket
        xt = center.x_tilde
        problem = self.cfg.problem
        objective = problem.exact_loss(xt)
        x_star = getattr(problem, "x_star", None)
        dist = float(np.linalg.norm(xt - x_star)) if x_star is not None else None
        dis = disagreement(workers) if workers else 0.0
        # sim rows: wall_clock_s := sim_time (deterministic), worker -1 = center view
        self.rows.append((sim_time, sim_time, center.version, -1, objective, dist, dis))
        if self.cfg.record_snapshots:
            self.snapshots.append(np.array(xt))


def run_sim(cfg: SimConfig) -> SimResult:
    """Execute cfg deterministically; see module docstring for semantics."""
    cfg.validate()
    if cfg.algorithm in ("admm_rr", "admm_rr_grad"):
        return _run_admm(cfg)
    if cfg.algorithm == "easgd_sync":
        return _run_sync(cfg)
    return _run_async(cfg)


def _check_divergence(arrays, event_index: int):
    for a in arrays:
        if np.max(np.abs(a)) > DIVERGENCE_LIMIT:
            raise DivergedError(
                f"state norm exceeded {DIVERGENCE_LIMIT:g} at event {event_index}", event_index
            )


def _stack_easgd(workers, center):
    return np.array([float(w.x[0]) for w in workers] + [float(center.x_tilde[0])])


def _run_sync(cfg: SimConfig) -> SimResult:
    workers, center = _initial_states(cfg)
    metrics = _Metrics(cfg)
    events: list[SimEvent] = []
    stacked = [_stack_easgd(workers, center)] if cfg.record_stacked else []
    metrics.maybe_emit(0, 0.0, workers, center)
    round_cost = max(cfg.schedule.cost_of(i) for i in range(cfg.hp.p))
    if cfg.schedule.law != "fixed":
        raise ConfigError("sync schedule requires the fixed duration law")
    t = 0.0
    for r in range(cfg.T):
        t = (r + 1) * round_cost
        version_before = center.version
        workers, center = alg.easgd_sync_round(workers, center, cfg.problem, cfg.hp, cfg.batch_size)
        for w in workers:
            events.append(SimEvent(t, w.shard.worker_id, "grad_step", version_before))
        events.append(SimEvent(t, -1, "comm", center.version))
        _check_divergence([w.x for w in workers] + [center.x_tilde], len(events) - 1)
        if cfg.record_stacked:
            stacked.append(_stack_easgd(workers, center))
        metrics.maybe_emit(center.version, t, workers, center)
    metrics.maybe_emit(center.version, t, workers, center, final=True)
    return SimResult(workers, center, metrics.rows, events, stacked, metrics.snapshots)


def _duration(cfg: SimConfig, worker: int, rng_state: RngState) -> tuple[float, RngState]:
    c = cfg.schedule.cost_of(worker)
    if cfg.schedule.law == "fixed":
        return c, rng_state
    u, rng_state = rng_state.uniforms(1)
    return c * float(-np.log(1.0 - u[0])), rng_state


def _run_async(cfg: SimConfig) -> SimResult:
    workers, center = _initial_states(cfg)
    p = cfg.hp.p
    metrics = _Metrics(cfg)
    events: list[SimEvent] = []
    acc = [np.zeros(cfg.problem.dim) for _ in range(p)] if cfg.algorithm == "downpour" else None
    round_len = p * cfg.hp.tau  # events per "round" for stacked recording
    stacked = [_stack_easgd(workers, center)] if cfg.record_stacked else []
    metrics.maybe_emit(0, 0.0, workers, center)

    if cfg.schedule.kind == "round_robin":
        order = _round_robin_order(cfg)
    else:
        order = _async_random_order(cfg)

    steps_bucket = 0  # cadence counter for center-less algorithms
    for event_index, (t, i) in enumerate(order):
        ws = workers[i]
        due = (ws.t + 1) % cfg.hp.tau == 0
        comm_event = None
        if cfg.algorithm == "sgd":
            workers[i] = alg.sgd_worker_step(ws, cfg.problem, cfg.hp.eta, cfg.batch_size)
        elif cfg.algorithm == "msgd":
            workers[i] = alg.msgd_step(ws, cfg.problem, cfg.hp.eta, cfg.hp.delta, cfg.batch_size)
        elif cfg.algorithm in ("easgd_async", "eamsgd"):
            step = alg.easgd_async_worker_step if cfg.algorithm == "easgd_async" else alg.eamsgd_worker_step
            snap = center.x_tilde if due else None
            workers[i], e = step(ws, snap, cfg.problem, cfg.hp, cfg.batch_size, cfg.comm_order)
            if e is not None:
                center = alg.center_apply_elastic(center, e)
                comm_event = SimEvent(t, i, "comm", center.version)
        else:  # downpour: push + fetch happen after the gradient step
            workers[i], acc[i], push = alg.downpour_worker_step(ws, acc[i], cfg.problem, cfg.hp, cfg.batch_size)
            if push is not None:
                center = alg.center_apply_elastic(center, push)
                workers[i] = alg.downpour_fetch(workers[i], center.x_tilde)
                comm_event = SimEvent(t, i, "comm", center.version)
        grad_event = SimEvent(t, i, "grad_step", center.version)
        if comm_event is not None and cfg.algorithm != "downpour" and cfg.comm_order == "before":
            events.extend([comm_event, grad_event])
        elif comm_event is not None:
            events.extend([grad_event, comm_event])
        else:
            events.append(grad_event)
        _check_divergence([workers[i].x, center.x_tilde], len(events) - 1)
        if cfg.record_stacked and (event_index + 1) % round_len == 0:
            stacked.append(_stack_easgd(workers, center))
        if cfg.algorithm in CENTERLESS:
            steps_bucket += 1
            metrics.maybe_emit(steps_bucket, t, workers, _centerless_view(cfg, workers, center))
        else:
            metrics.maybe_emit(center.version, t, workers, center)
    t_final = order[-1][0] if order else 0.0
    final_center = _centerless_view(cfg, workers, center) if cfg.algorithm in CENTERLESS else center
    metrics.maybe_emit(0, t_final, workers, final_center, final=True)
    return SimResult(workers, center, metrics.rows, events, stacked, metrics.snapshots)


def _centerless_view(cfg, workers, center) -> alg.CenterState:
    # sgd/msgd have no center; metrics report the mean worker for continuity.
    xs = np.stack([w.x for w in workers])
    return alg.CenterState(xs.mean(axis=0), center.version)


def _round_robin_order(cfg: SimConfig) -> list[tuple[float, int]]:
    order = []
    t = 0.0
    rng = RngState(substream(cfg.schedule.seed, 0x7363686564))
    for _ in range(cfg.T):
        for i in range(cfg.hp.p):
            d, rng = _duration(cfg, i, rng)
            t += d
            order.append((t, i))
    return order


def _async_random_order(cfg: SimConfig) -> list[tuple[float, int]]:
    heap = []
    rngs = [RngState(substream(cfg.schedule.seed, 0x61737963 + i)) for i in range(cfg.hp.p)]
    done = [0] * cfg.hp.p
    for i in range(cfg.hp.p):
        d, rngs[i] = _duration(cfg, i, rngs[i])
        heapq.heappush(heap, (d, i))
    order = []
    while heap:
        t, i = heapq.heappop(heap)
        order.append((t, i))
        done[i] += 1
        if done[i] < cfg.T:
            d, rngs[i] = _duration(cfg, i, rngs[i])
            heapq.heappush(heap, (t + d, i))
    return order


def _run_admm(cfg: SimConfig) -> SimResult:
    workers, center = _initial_states(cfg)
    admm = _admm_initial(cfg, workers)
    h = float(cfg.problem.H[0, 0])
    xt = float(center.x_tilde[0])
    kind = "argmin" if cfg.algorithm == "admm_rr" else "gradient"
    substep = alg.admm_roundrobin_substep if kind == "argmin" else alg.admm_pd_substep
    metrics = _Metrics(cfg)
    events: list[SimEvent] = []
    stacked = []
    version = 0

    def stack():
        return np.array(
            [float(w.x[0]) for w in admm] + [float(w.lam[0]) for w in admm] + [xt]
        )

    if cfg.record_stacked:
        stacked.append(stack())
    wrap = [alg.WorkerState(w.x, np.zeros_like(w.x), 0, workers[j].shard, workers[j].rng)
            for j, w in enumerate(admm)]
    metrics.maybe_emit(0, 0.0, wrap, alg.CenterState(np.array([xt]), version))
    order = _round_robin_order(cfg)
    for event_index, (t, i) in enumerate(order):
        admm, xt = substep(admm, i, xt, h, cfg.hp.eta, cfg.hp.rho)
        version += 1
        events.append(SimEvent(t, i, "comm", version))
        _check_divergence([w.x for w in admm] + [np.array([xt])], len(events) - 1)
        if cfg.record_stacked and (event_index + 1) % cfg.hp.p == 0:
            stacked.append(stack())
        wrap = [alg.WorkerState(w.x, np.zeros_like(w.x), 0, workers[j].shard, workers[j].rng)
                for j, w in enumerate(admm)]
        metrics.maybe_emit(version, t, wrap, alg.CenterState(np.array([xt]), version))
    t_final = order[-1][0] if order else 0.0
    metrics.maybe_emit(version, t_final, wrap, alg.CenterState(np.array([xt]), version), final=True)
    return SimResult(admm, alg.CenterState(np.array([xt]), version), metrics.rows, events, stacked, metrics.snapshots)


def replay_check(events: list[SimEvent], cfg: SimConfig) -> bool:
    """Re-execute cfg and demand the identical event log and terminal state."""
    fresh = run_sim(cfg)
    n = min(len(events), len(fresh.events))
    for k in range(n):
        if events[k] != fresh.events[k]:
            raise ReplayMismatchError(
                f"event {k} differs: recorded {events[k]} vs replay {fresh.events[k]}", k
            )
    if len(events) != len(fresh.events):
        raise ReplayMismatchError(
            f"event count differs: recorded {len(events)} vs replay {len(fresh.events)}", n
        )
    return True

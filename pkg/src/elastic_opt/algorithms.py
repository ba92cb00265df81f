"""Single-step update kernels for every optimizer in the workbench.

All kernels are pure functions of explicit state records; the simulator and
the network runtime call exactly the same code, which is what makes their
trajectories comparable bit-for-bit. State arrays are frozen on the way out.

Communication timing: a worker with period tau communicates on local
iterations number tau, 2*tau, ... (iteration number = completed steps + 1),
so a run of T steps performs exactly floor(T/tau) communications. On a
communication iteration the exchange happens before the gradient step by
default; `comm_order="after"` flips it (both orderings testable).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import check_finite, freeze
from .errors import DimensionError, NumericsError, ProtocolError
from .problems import DataShard
from .rng import RngState


@dataclass(frozen=True)
class HyperParams:
    """eta, rho, tau, p, delta; alpha and beta are always derived."""

    eta: float
    rho: float = 0.0
    tau: int = 1
    p: int = 1
    delta: float = 0.0

    def __post_init__(self):
        if self.eta <= 0:
            raise NumericsError("eta must be > 0")
        if self.rho < 0:
            raise NumericsError("rho must be >= 0")
        if self.tau < 1:
            raise NumericsError("tau must be >= 1")
        if self.p < 1:
            raise NumericsError("p must be >= 1")
        if not 0.0 <= self.delta < 1.0:
            raise NumericsError("delta must be in [0, 1)")
        if self.beta >= 1.0:
            warnings.warn(
                f"beta = p*eta*rho = {self.beta:.4g} >= 1: center moving-average "
                "interpretation breaks down (run may diverge)",
                stacklevel=2,
            )

    @property
    def alpha(self) -> float:
        return self.eta * self.rho

    @property
    def beta(self) -> float:
        return self.p * self.alpha


@dataclass(frozen=True)
class WorkerState:
    x: np.ndarray
    v: np.ndarray
    t: int
    shard: DataShard
    rng: RngState

    def __post_init__(self):
        if self.v.shape != self.x.shape:
            raise DimensionError("momentum buffer dim != x dim")


def make_worker(x0, shard: DataShard, seed: int) -> WorkerState:
    x = freeze(np.array(x0, dtype=np.float64))
    return WorkerState(x=x, v=freeze(np.zeros_like(x)), t=0, shard=shard, rng=RngState(seed))


@dataclass(frozen=True)
class CenterState:
    x_tilde: np.ndarray
    version: int = 0


@dataclass(frozen=True)
class AdmmWorkerState:
    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        if self.lam.shape != self.x.shape:
            raise DimensionError("dual variable dim != x dim")


def _draw(ws: WorkerState, batch_size: int):
    return ws.shard.draw(ws.rng, batch_size)


def _comm_due(t: int, tau: int) -> bool:
    return (t + 1) % tau == 0


def sgd_step(x: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    if x.shape != grad.shape:
        raise DimensionError("sgd_step: grad dim != x dim")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(grad)) and np.isfinite(eta)):
        raise NumericsError("sgd_step: non-finite input")
    return check_finite(x - eta * grad, "sgd_step result")


def sgd_worker_step(ws: WorkerState, oracle, eta: float, batch_size: int = 1) -> WorkerState:
    """One local SGD iteration drawing its minibatch from the worker's shard."""
    idx, rng = _draw(ws, batch_size)
    _, g = oracle.eval(ws.x, idx)
    return replace(ws, x=freeze(sgd_step(ws.x, g, eta)), rng=rng, t=ws.t + 1)


def msgd_step(ws: WorkerState, oracle, eta: float, delta: float, batch_size: int = 1) -> WorkerState:
    """Nesterov momentum: v' = delta*v - eta*grad(x + delta*v); x' = x + v'."""
    if not 0.0 <= delta < 1.0:
        raise NumericsError("delta must be in [0, 1)")
    idx, rng = _draw(ws, batch_size)
    _, g = oracle.eval(ws.x + delta * ws.v, idx)
    v = delta * ws.v - eta * g
    x = ws.x + v
    return replace(ws, x=freeze(check_finite(x, "msgd x")), v=freeze(v), rng=rng, t=ws.t + 1)


def easgd_sync_round(
    workers: list[WorkerState],
    center: CenterState,
    oracle,
    hp: HyperParams,
    batch_size: int = 1,
) -> tuple[list[WorkerState], CenterState]:
    """Synchronous round: workers see the pre-round center, the center sees
    pre-round workers; x_i' = x_i - eta g_i - alpha(x_i - xt) and
    xt' = xt + alpha * sum_i (x_i - xt)  (= (1-beta) xt + beta mean x_i).
    """
    if hp.p != len(workers):
        raise DimensionError(f"hp.p = {hp.p} but {len(workers)} workers supplied")
    xt = center.x_tilde
    alpha = hp.alpha
    elastic_sum = np.zeros_like(xt)
    out = []
    for ws in workers:
        if ws.x.shape != xt.shape:
            raise DimensionError("worker dim != center dim")
        idx, rng = _draw(ws, batch_size)
        _, g = oracle.eval(ws.x, idx)
        diff = ws.x - xt
        elastic_sum += diff
        x = ws.x - hp.eta * g - alpha * diff
        out.append(replace(ws, x=freeze(check_finite(x, "easgd worker x")), rng=rng, t=ws.t + 1))
    new_center = CenterState(freeze(xt + alpha * elastic_sum), center.version + 1)
    return out, new_center


def center_apply_elastic(center: CenterState, e: np.ndarray) -> CenterState:
    if e.shape != center.x_tilde.shape:
        raise DimensionError("elastic update dim != center dim")
    return CenterState(freeze(check_finite(center.x_tilde + e, "center x")), center.version + 1)


def easgd_async_worker_step(
    ws: WorkerState,
    center_snapshot: np.ndarray | None,
    oracle,
    hp: HyperParams,
    batch_size: int = 1,
    comm_order: str = "before",
) -> tuple[WorkerState, np.ndarray | None]:
    """One local iteration of asynchronous EASGD.

    On communication iterations the caller passes the fetched center
    snapshot; the kernel returns the elastic difference e = alpha*(x - xt)
    it already subtracted locally, for the caller to deliver to the center.
    """
    due = _comm_due(ws.t, hp.tau)
    if due != (center_snapshot is not None):
        raise ProtocolError(
            f"step {ws.t + 1} with tau={hp.tau}: snapshot "
            f"{'missing' if due else 'unexpectedly present'}"
        )
    x = ws.x
    e = None
    if due and comm_order == "before":
        e = hp.alpha * (x - center_snapshot)
        x = x - e
    idx, rng = _draw(ws, batch_size)
    _, g = oracle.eval(x, idx)
    x = x - hp.eta * g
    if due and comm_order == "after":
        e = hp.alpha * (x - center_snapshot)
        x = x - e
    ws = replace(ws, x=freeze(check_finite(x, "easgd worker x")), rng=rng, t=ws.t + 1)
    return ws, e


def eamsgd_worker_step(
    ws: WorkerState,
    center_snapshot: np.ndarray | None,
    oracle,
    hp: HyperParams,
    batch_size: int = 1,
    comm_order: str = "before",
) -> tuple[WorkerState, np.ndarray | None]:
    """EAMSGD: the asynchronous rule with a Nesterov local step.

    Communication moves x only; the momentum buffer is never touched by the
    exchange. With delta=0 this reproduces easgd_async_worker_step bit for
    bit (same minibatch draws, x + 0*v evaluates to x exactly).
    """
    due = _comm_due(ws.t, hp.tau)
    if due != (center_snapshot is not None):
        raise ProtocolError(
            f"step {ws.t + 1} with tau={hp.tau}: snapshot "
            f"{'missing' if due else 'unexpectedly present'}"
        )
    x = ws.x
    e = None
    if due and comm_order == "before":
        e = hp.alpha * (x - center_snapshot)
        x = x - e
    idx, rng = _draw(ws, batch_size)
    _, g = oracle.eval(x + hp.delta * ws.v, idx)
    v = hp.delta * ws.v - hp.eta * g
    x = x + v
    if due and comm_order == "after":
        e = hp.alpha * (x - center_snapshot)
        x = x - e
    ws = replace(ws, x=freeze(check_finite(x, "eamsgd worker x")), v=freeze(v), rng=rng, t=ws.t + 1)
    return ws, e


def downpour_worker_step(
    ws: WorkerState,
    accumulated: np.ndarray,
    oracle,
    hp: HyperParams,
    batch_size: int = 1,
) -> tuple[WorkerState, np.ndarray, np.ndarray | None]:
    """DOWNPOUR local step: descend, accumulate, and every tau-th step hand
    the accumulated update back as `push`.

    The protocol is two-phase: when push is not None the caller must apply it
    to the center and then complete the step with downpour_fetch(ws, xt_new),
    because the fetch must observe the post-push center.
    """
    if accumulated.shape != ws.x.shape:
        raise DimensionError("accumulator dim != x dim")
    idx, rng = _draw(ws, batch_size)
    _, g = oracle.eval(ws.x, idx)
    x = ws.x - hp.eta * g
    acc = accumulated - hp.eta * g
    ws = replace(ws, x=freeze(check_finite(x, "downpour worker x")), rng=rng, t=ws.t + 1)
    if _comm_due(ws.t - 1, hp.tau):
        return ws, np.zeros_like(acc), acc
    return ws, acc, None


def downpour_fetch(ws: WorkerState, x_tilde: np.ndarray) -> WorkerState:
    """Replace the worker's parameters with the fetched center value."""
    if x_tilde.shape != ws.x.shape:
        raise DimensionError("fetched center dim != x dim")
    return replace(ws, x=freeze(np.array(x_tilde, dtype=np.float64)))


def admm_roundrobin_substep(
    workers: list[AdmmWorkerState],
    i: int,
    x_tilde: float,
    h: float,
    eta: float,
    rho: float,
) -> tuple[list[AdmmWorkerState], float]:
    """Scalar round-robin consensus ADMM, worker i's turn (exact x-argmin).

    lam_i += x_i - xt;  x_i = rho*(xt - lam_i)/(h + rho);
    xt = mean_j(x_j + lam_j) using current values. `eta` plays no role in
    the exact-argmin update and is accepted only for interface uniformity
    with the gradient-form variant below.
    """
    del eta
    if h + rho == 0:
        raise NumericsError("h + rho must be nonzero")
    ws = workers[i]
    lam = ws.lam + (ws.x - x_tilde)
    x = rho * (x_tilde - lam) / (h + rho)
    out = list(workers)
    out[i] = AdmmWorkerState(x=freeze(check_finite(x, "admm x")), lam=freeze(lam))
    xt = sum(float(w.x[0] + w.lam[0]) for w in out) / len(out)
    return out, xt


def admm_pd_substep(
    workers: list[AdmmWorkerState],
    i: int,
    x_tilde: float,
    h: float,
    eta: float,
    rho: float,
) -> tuple[list[AdmmWorkerState], float]:
    """Gradient-form round-robin ADMM (every update an eta-scaled step).

    With alpha = eta*rho and e = alpha*(x_i - xt + lam_i'):
      lam_i' = lam_i + alpha*(x_i - xt)
      x_i'   = x_i - eta*h*x_i - e
      xt'    = xt + e
    The dual integrates the worker/center disagreement; freezing it at zero
    recovers round-robin EASGD exactly. This is the variant whose stability
    region the scan compares against EASGD's.
    """
    alpha = eta * rho
    ws = workers[i]
    lam = ws.lam + alpha * (ws.x - x_tilde)
    e = alpha * (ws.x - x_tilde + lam)
    x = ws.x - eta * h * ws.x - e
    out = list(workers)
    out[i] = AdmmWorkerState(x=freeze(check_finite(x, "admm x")), lam=freeze(lam))
    return out, float(x_tilde + e[0])


def admm_round(
    workers: list[AdmmWorkerState],
    x_tilde: float,
    h: float,
    eta: float,
    rho: float,
    kind: str = "argmin",
) -> tuple[list[AdmmWorkerState], float]:
    """One full round: every worker acts once, in index order."""
    step = admm_roundrobin_substep if kind == "argmin" else admm_pd_substep
    for i in range(len(workers)):
        workers, x_tilde = step(workers, i, x_tilde, h, eta, rho)
    return workers, x_tilde

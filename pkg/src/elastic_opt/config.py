"""key=value experiment configs.

One key per line, `#` starts a comment, blank lines ignored. Unknown keys
and keys that do not apply to the requested mode are rejected by name.
Every run writes `resolved_config` (all defaults materialized) beside its
outputs; re-running a resolved config reproduces the run exactly.

Key reference (types and defaults) lives in KEYS below and in the README.
Environment overrides: EAVG_SEED replaces `seed`, EAVG_LOG sets the log
level.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import algorithms as alg
from . import problems as prob
from .errors import ConfigError
from .rng import substream
from .sim import Schedule, SimConfig

MODES = ("sim", "stability", "net-center", "net-worker", "speedup")


def _bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in s.split(";") if tok)


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in s.split(";") if tok)


@dataclass(frozen=True)
class Key:
    parse: object
    default: object          # REQUIRED sentinel -> must be present
    modes: tuple[str, ...]
    doc: str


REQUIRED = object()

_ALL = MODES
_RUNNY = ("sim", "net-worker", "speedup")           # modes that execute an algorithm
_PROBLEMY = ("sim", "net-center", "net-worker", "speedup")

KEYS: dict[str, Key] = {
    "mode": Key(str, REQUIRED, _ALL, "sim | stability | net-center | net-worker | speedup"),
    "seed": Key(int, 0, _PROBLEMY, "master seed; every stream derives from it"),
    "out_dir": Key(str, "out", _ALL, "output directory (created if missing)"),
    # problem
    "problem": Key(str, "quadratic", _PROBLEMY, "quadratic | logistic | mlp | csv"),
    "dim": Key(int, 4, _PROBLEMY, "parameter dimension (quadratic) / feature dim"),
    "condition_number": Key(float, 10.0, _PROBLEMY, "quadratic eigenvalue span [1, cond]"),
    "noise_sigma": Key(float, 0.0, _PROBLEMY, "quadratic gradient noise std-dev"),
    "n_samples": Key(int, 1024, _PROBLEMY, "dataset size (logistic/mlp); quadratic uses 1e6 virtual"),
    "separation": Key(float, 2.0, _PROBLEMY, "two-gaussians class separation"),
    "l2": Key(float, 0.0, _PROBLEMY, "logistic l2 penalty"),
    "hidden": Key(int, 8, _PROBLEMY, "mlp hidden width"),
    "csv_path": Key(str, "", _PROBLEMY, "dataset path for problem=csv"),
    "batch_size": Key(int, 1, _RUNNY, "minibatch size per local step"),
    # optimizer
    "algorithm": Key(str, "easgd_sync", ("sim", "stability", "net-worker", "speedup"),
                     "sim: easgd_sync|easgd_async|eamsgd|downpour|sgd|msgd|admm_rr|admm_rr_grad; "
                     "stability: sgd|msgd|easgd_sync|easgd_rr|admm_rr|admm_rr_grad"),
    "eta": Key(float, 0.01, _RUNNY + ("stability",), "learning rate"),
    "rho": Key(float, 0.1, _RUNNY + ("stability",), "elastic penalty (alpha = eta*rho)"),
    "tau": Key(int, 10, _RUNNY + ("stability",), "communication period"),
    "p": Key(int, 1, _RUNNY + ("stability",), "worker count"),
    "delta": Key(float, 0.99, _RUNNY + ("stability",), "momentum"),
    "comm_order": Key(str, "before", _RUNNY, "communicate before|after the gradient step"),
    # simulator
    "schedule": Key(str, "round_robin", ("sim",), "sync | round_robin | async_random"),
    "step_cost": Key(_float_list, (1.0,), ("sim",), "per-worker cost; scalar or ;-list"),
    "duration_law": Key(str, "fixed", ("sim",), "fixed | exp"),
    "schedule_seed": Key(int, 0, ("sim",), "seed for exp durations"),
    "T": Key(int, 1000, _RUNNY, "local steps (or rounds) per worker"),
    "cadence": Key(int, 10, _RUNNY, "metrics row every this many center versions"),
    "init_scale": Key(float, 1.0, _RUNNY, "worker x0 ~ init_scale * N(0, I)"),
    "record_snapshots": Key(_bool, False, ("sim",), "record center snapshots + averaged iterate"),
    "burn_in_fraction": Key(float, 0.5, ("sim",), "averaged-iterate burn-in"),
    # stability
    "eta_h_min": Key(float, 0.05, ("stability",), "eta*h axis start"),
    "eta_h_max": Key(float, 1.95, ("stability",), "eta*h axis end (inclusive)"),
    "eta_h_step": Key(float, 0.05, ("stability",), "eta*h axis step"),
    "alpha_min": Key(float, 0.05, ("stability",), "alpha axis start"),
    "alpha_max": Key(float, 0.95, ("stability",), "alpha axis end (inclusive)"),
    "alpha_step": Key(float, 0.05, ("stability",), "alpha axis step"),
    "compare_admm": Key(_bool, False, ("stability",), "also write the EASGD-vs-ADMM report"),
    # network
    "bind": Key(str, "127.0.0.1:0", ("net-center", "speedup"), "center listen address host:port"),
    "connect": Key(str, "127.0.0.1:5555", ("net-worker",), "center address host:port"),
    "worker_id": Key(int, 0, ("net-worker",), "this worker's id in [0, p)"),
    "poll_interval_s": Key(float, 0.02, ("net-center", "speedup"), "center objective poll interval"),
    "threshold": Key(float, 0.0, ("net-center", "speedup"), "objective threshold for time-to-threshold"),
    "budget_s": Key(float, 120.0, ("speedup",), "per-p wall-clock budget"),
    "grad_sleep_ms": Key(float, 0.0, ("net-worker", "speedup"), "artificial per-gradient cost"),
    "p_list": Key(_int_list, (1, 2, 4), ("speedup",), "worker counts to measure, e.g. 1;2;4"),
    "retry_max": Key(int, 5, ("net-worker",), "reconnect attempts before aborting"),
    "retry_backoff_s": Key(float, 0.1, ("net-worker",), "base backoff (doubles per attempt)"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    # -- construction helpers ------------------------------------------------

    def hyper_params(self) -> alg.HyperParams:
        return alg.HyperParams(eta=self.eta, rho=self.rho, tau=self.tau, p=self.p, delta=self.delta)

    def hyper_params_p(self, p: int) -> alg.HyperParams:
        return alg.HyperParams(eta=self.eta, rho=self.rho, tau=self.tau, p=p, delta=self.delta)

    def build_problem(self):
        kind = self.problem
        seed = substream(self.seed, 0x70726F62)
        if kind == "quadratic":
            return prob.make_quadratic(self.dim, self.condition_number, self.noise_sigma, seed)
        if kind == "logistic":
            return prob.make_two_gaussians(self.n_samples, self.dim, self.separation, seed)
        if kind == "mlp":
            return prob.make_tiny_mlp(self.n_samples, self.dim, self.hidden, seed)
        if kind == "csv":
            if not self.csv_path:
                raise ConfigError("problem=csv requires csv_path")
            return prob.load_csv_dataset(self.csv_path, self.l2)
        raise ConfigError(f"unknown problem '{kind}'")

    def sim_config(self) -> SimConfig:
        costs = self.step_cost
        schedule = Schedule(
            kind=self.schedule,
            costs=costs if len(costs) > 1 else costs[0],
            law=self.duration_law,
            seed=self.schedule_seed,
        )
        return SimConfig(
            algorithm=self.algorithm,
            hp=self.hyper_params(),
            problem=self.build_problem(),
            schedule=schedule,
            T=self.T,
            seed=self.seed,
            cadence=self.cadence,
            batch_size=self.batch_size,
            comm_order=self.comm_order,
            init_scale=self.init_scale,
            record_snapshots=self.record_snapshots,
        )


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        raw[key] = value

    if "mode" not in raw:
        raise ConfigError(f"{source}: missing required key 'mode'")
    mode = raw["mode"]
    if mode not in MODES:
        raise ConfigError(f"{source}: mode must be one of {MODES}, got '{mode}'")

    values: dict = {"mode": mode}
    for key, value in raw.items():
        if key == "mode":
            continue
        spec = KEYS[key]
        if mode not in spec.modes:
            raise ConfigError(f"{source}: key '{key}' does not apply to mode '{mode}'")
        try:
            values[key] = spec.parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}: key '{key}': {exc}") from exc
    for key, spec in KEYS.items():
        if key == "mode" or mode not in spec.modes:
            continue
        if key not in values:
            if spec.default is REQUIRED:
                raise ConfigError(f"{source}: missing required key '{key}'")
            values[key] = spec.default
    return ExperimentConfig(values)


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), source=str(path))


def resolved_text(cfg: ExperimentConfig) -> str:
    """All applicable keys, defaults materialized, in reference order."""
    lines = [f"mode={cfg.mode}"]
    for key, spec in KEYS.items():
        if key == "mode" or cfg.mode not in spec.modes:
            continue
        v = cfg.values[key]
        if isinstance(v, tuple):
            v = ";".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key}={v}")
    return "\n".join(lines) + "\n"


def parse_address(s: str) -> tuple[str, int]:
    host, _, port = s.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"expected host:port, got '{s}'")
    return host, int(port)

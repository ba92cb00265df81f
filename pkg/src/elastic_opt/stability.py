"""Exact linear round maps on the 1-D quadratic and their spectra.

Each algorithm's round (every worker acts once, round-robin composing visits
in index order) is expressed as a matrix M on the stacked state, built from
the same update rules the kernels implement and cross-checked against the
simulator. Gradient noise enters as -eta*sigma*xi in each worker gradient
step; the per-round injection is tracked stage by stage so the stationary
covariance solve uses the exact implied Q.

Scans normalize h to 1 (the quadratic case is scale covariant), so grid
coordinates are s = eta*h and alpha = eta*rho, with eta = s and rho =
alpha/s wherever the actual rates matter.

Two ADMM variants exist (see algorithms module): `admm_rr` is the exact
x-argmin form, which at p = 1 is provably stable for every rho (its dual
vanishes after one visit; eigenvalues {0, 0, rho/(h+rho)}), and
`admm_rr_grad` is the gradient form whose dual integrates disagreement and
which does exhibit an instability region. The comparison report measures
both against round-robin EASGD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import lyapunov_stationary, spectral_radius
from .errors import ConfigError, NumericsError, UnstableSystemError

STABLE_EPS = 1e-10  # stable iff radius < 1 - STABLE_EPS (avoids boundary flicker)

MAP_ALGORITHMS = ("sgd", "msgd", "easgd_sync", "easgd_rr", "admm_rr", "admm_rr_grad")


@dataclass(frozen=True)
class RoundMapSpec:
    algorithm: str
    p: int = 1
    h: float = 1.0
    eta: float = 0.1
    rho: float = 0.0
    delta: float = 0.0
    tau: int = 1

    def __post_init__(self):
        if self.algorithm not in MAP_ALGORITHMS:
            raise ConfigError(f"unsupported round-map algorithm '{self.algorithm}'")
        if self.h <= 0:
            raise ConfigError("h must be > 0")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if self.algorithm in ("sgd", "msgd") and self.p != 1:
            raise ConfigError(f"{self.algorithm} round map is single-worker (p=1)")
        if self.algorithm in ("sgd", "msgd", "easgd_sync", "admm_rr", "admm_rr_grad") and self.tau != 1:
            raise ConfigError(f"tau > 1 only applies to easgd_rr, not {self.algorithm}")

    @property
    def alpha(self) -> float:
        return self.eta * self.rho


@dataclass(frozen=True)
class RoundMap:
    """M plus the per-stage noise injections: s <- A_j s + sigma * B_j xi_j."""

    spec: RoundMapSpec
    matrix: np.ndarray
    stages: tuple[tuple[np.ndarray, np.ndarray], ...]
    labels: tuple[str, ...]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def noise_covariance(self) -> np.ndarray:
        """Q for unit sigma: sum over stages of (later stages) B B^T (...)^T."""
        d = self.dim
        Q = np.zeros((d, d))
        after = np.eye(d)
        for A, B in reversed(self.stages):
            if B.shape[1]:
                PB = after @ B
                Q += PB @ PB.T
            after = after @ A
        return Q


def build_round_map(spec: RoundMapSpec) -> RoundMap:
    s = spec.eta * spec.h
    a = spec.alpha
    eta = spec.eta
    p = spec.p

    if spec.algorithm == "sgd":
        stages = [(np.array([[1.0 - s]]), np.array([[-eta]]))]
        labels = ("x",)
    elif spec.algorithm == "msgd":
        d = spec.delta
        A = np.array([[1.0 - s, d * (1.0 - s)], [-s, d * (1.0 - s)]])
        stages = [(A, np.array([[-eta], [-eta]]))]
        labels = ("x", "v")
    elif spec.algorithm == "easgd_sync":
        n = p + 1
        A = np.zeros((n, n))
        for i in range(p):
            A[i, i] = 1.0 - s - a
            A[i, p] = a
            A[p, i] = a
        A[p, p] = 1.0 - p * a
        B = np.zeros((n, p))
        B[:p, :p] = -eta * np.eye(p)
        stages = [(A, B)]
        labels = tuple(f"x{i}" for i in range(p)) + ("xt",)
    elif spec.algorithm == "easgd_rr":
        stages = _easgd_rr_stages(p, s, a, eta, spec.tau)
        labels = tuple(f"x{i}" for i in range(p)) + ("xt",)
    else:
        stages = _admm_stages(spec)
        labels = (
            tuple(f"x{i}" for i in range(p))
            + tuple(f"lam{i}" for i in range(p))
            + ("xt",)
        )

    M = np.eye(stages[0][0].shape[0])
    for A, _ in stages:
        M = A @ M
    return RoundMap(spec, M, tuple(stages), labels)


def _easgd_rr_stages(p: int, s: float, a: float, eta: float, tau: int):
    """tau-1 pure gradient cycles, then the comm+grad cycle in worker order."""
    n = p + 1
    stages = []
    if tau > 1:
        G = np.eye(n)
        for i in range(p):
            G[i, i] = 1.0 - s
        Bg = np.zeros((n, p))
        Bg[:p, :p] = -eta * np.eye(p)
        stages.extend([(G, Bg)] * (tau - 1))
    for i in range(p):
        V = np.eye(n)
        V[i, i] = (1.0 - s) * (1.0 - a)
        V[i, p] = (1.0 - s) * a
        V[p, i] = a
        V[p, p] = 1.0 - a
        B = np.zeros((n, 1))
        B[i, 0] = -eta
        stages.append((V, B))
    return stages


def _admm_stages(spec: RoundMapSpec):
    p, h, eta, rho = spec.p, spec.h, spec.eta, spec.rho
    n = 2 * p + 1
    I = np.eye(n)
    stages = []
    for i in range(p):
        V = np.eye(n)
        ex, el, et = I[i], I[p + i], I[2 * p]
        if spec.algorithm == "admm_rr":
            if h + rho == 0:
                raise NumericsError("h + rho must be nonzero")
            lam_new = el + ex - et
            c = rho / (h + rho)
            x_new = c * (et - lam_new)
            V[p + i] = lam_new
            V[i] = x_new
            xt_new = np.zeros(n)
            for j in range(p):
                xt_new += (x_new + lam_new) if j == i else (I[j] + I[p + j])
            V[2 * p] = xt_new / p
        else:  # admm_rr_grad
            a = eta * rho
            lam_new = el + a * (ex - et)
            e = a * (ex - et + lam_new)
            V[p + i] = lam_new
            V[i] = ex - eta * h * ex - e
            V[2 * p] = et + e
        stages.append((V, np.zeros((n, 0))))
    return stages


@dataclass(frozen=True)
class StabilityGrid:
    algorithm: str
    p: int
    eta_h: np.ndarray
    alpha: np.ndarray
    radius: np.ndarray  # shape (len(eta_h), len(alpha))

    @property
    def stable(self) -> np.ndarray:
        return self.radius < 1.0 - STABLE_EPS

    def to_csv(self) -> str:
        """Pinned format: header + row-major cells, radius to 9 decimals."""
        lines = ["eta_h,alpha,radius,stable"]
        for i, s in enumerate(self.eta_h):
            for j, a in enumerate(self.alpha):
                r = self.radius[i, j]
                lines.append(f"{s:.6g},{a:.6g},{r:.9f},{int(r < 1.0 - STABLE_EPS)}")
        return "\n".join(lines) + "\n"


def grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 12)


def _spec_at(algorithm: str, p: int, s: float, a: float, h: float = 1.0, tau: int = 1) -> RoundMapSpec:
    eta = s / h
    if eta <= 0:
        raise ConfigError(f"cell eta_h={s} requires eta > 0")
    return RoundMapSpec(algorithm=algorithm, p=p, h=h, eta=eta, rho=a / eta, tau=tau)


def scan_stability(algorithm: str, p: int, eta_h, alpha, tau: int = 1) -> StabilityGrid:
    """radius = spectral_radius(build_round_map) at every (eta_h, alpha) cell."""
    eta_h = np.asarray(eta_h, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if eta_h.size == 0 or alpha.size == 0:
        raise ConfigError("scan axes must be nonempty")
    radius = np.empty((eta_h.size, alpha.size))
    for i, s in enumerate(eta_h):
        for j, a in enumerate(alpha):
            try:
                m = build_round_map(_spec_at(algorithm, p, float(s), float(a), tau=tau))
                radius[i, j] = spectral_radius(m.matrix)
            except NumericsError as exc:
                raise NumericsError(
                    f"cell (eta_h={s:.6g}, alpha={a:.6g}): {exc}"
                ) from exc
    return StabilityGrid(algorithm, p, eta_h, alpha, radius)


@dataclass(frozen=True)
class ComparisonReport:
    """EASGD-vs-ADMM stability comparison over one grid.

    `admm` is the gradient-form variant the instability claim concerns;
    `admm_argmin` is the spec'd exact-argmin kernel, reported alongside
    because its p=1 map is structurally stable everywhere (the measured
    empty set below documents that discrepancy rather than hiding it).
    """

    easgd: StabilityGrid
    admm: StabilityGrid
    admm_argmin: StabilityGrid

    def differing_cells(self, variant: str = "grad") -> list[tuple[float, float, float, float]]:
        grid = self.admm if variant == "grad" else self.admm_argmin
        out = []
        for i, s in enumerate(self.easgd.eta_h):
            for j, a in enumerate(self.easgd.alpha):
                if self.easgd.stable[i, j] != grid.stable[i, j]:
                    out.append((float(s), float(a), float(self.easgd.radius[i, j]), float(grid.radius[i, j])))
        return out

    def admm_unstable_easgd_stable(self, variant: str = "grad") -> list[tuple[float, float, float, float]]:
        grid = self.admm if variant == "grad" else self.admm_argmin
        out = []
        for i, s in enumerate(self.easgd.eta_h):
            for j, a in enumerate(self.easgd.alpha):
                if grid.radius[i, j] > 1.0 and self.easgd.radius[i, j] < 1.0:
                    out.append((float(s), float(a), float(self.easgd.radius[i, j]), float(grid.radius[i, j])))
        return out

    def to_csv(self) -> str:
        lines = ["eta_h,alpha,easgd_radius,admm_radius,admm_variant,easgd_stable,admm_stable"]
        for variant, grid in (("grad", self.admm), ("argmin", self.admm_argmin)):
            for s, a, re, ra in self.differing_cells(variant):
                lines.append(
                    f"{s:.6g},{a:.6g},{re:.9f},{ra:.9f},{variant},"
                    f"{int(re < 1.0 - STABLE_EPS)},{int(ra < 1.0 - STABLE_EPS)}"
                )
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        found = self.admm_unstable_easgd_stable("grad")
        found_argmin = self.admm_unstable_easgd_stable("argmin")
        lines = [
            f"grid: {self.easgd.eta_h.size} x {self.easgd.alpha.size} cells, p={self.easgd.p}",
            f"easgd_rr unstable cells: {int((~self.easgd.stable).sum())}",
            f"admm(gradient) unstable while easgd stable: {len(found)} cells"
            + (f", first at eta_h={found[0][0]:.6g}, alpha={found[0][1]:.6g}" if found else ""),
            f"admm(argmin) unstable while easgd stable: {len(found_argmin)} cells"
            " (p=1 argmin map is provably stable: eigenvalues {0, 0, rho/(h+rho)})",
        ]
        return "\n".join(lines) + "\n"


def compare_easgd_admm(p: int, eta_h, alpha) -> ComparisonReport:
    return ComparisonReport(
        easgd=scan_stability("easgd_rr", p, eta_h, alpha),
        admm=scan_stability("admm_rr_grad", p, eta_h, alpha),
        admm_argmin=scan_stability("admm_rr", p, eta_h, alpha),
    )


def stationary_variance(spec: RoundMapSpec, sigma: float, tol: float = 1e-14) -> np.ndarray:
    """Diagonal of Sigma solving Sigma = M Sigma M^T + sigma^2 Q."""
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    if spec.algorithm in ("admm_rr", "admm_rr_grad"):
        raise ConfigError("the ADMM variants are excluded from the noise model")
    m = build_round_map(spec)
    r = spectral_radius(m.matrix)
    if r >= 1.0:
        raise UnstableSystemError(f"spec has spectral radius {r:.6g} >= 1")
    if sigma == 0.0:
        return np.zeros(m.dim)
    Q = (sigma * sigma) * m.noise_covariance()
    return np.diag(lyapunov_stationary(m.matrix, Q, tol=tol))


def empirical_variance(
    spec: RoundMapSpec,
    sigma: float,
    n_rounds: int,
    burn_in: int,
    seed: int,
) -> np.ndarray:
    """Monte-Carlo variance over n_rounds simulated rounds (post burn-in).

    Runs the per-stage recursion with fresh noise per worker gradient step,
    through the compiled kernel when available (see elastic_opt.kernels).
    """
    from .kernels import stage_recursion_moments

    m = build_round_map(spec)
    _, var = stage_recursion_moments(m.stages, sigma, np.zeros(m.dim), n_rounds, burn_in, seed)
    return var

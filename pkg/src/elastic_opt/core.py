"""Dense vector/matrix plumbing, gradient checking, and small-matrix spectra.

Parameter vectors are 1-D float64 ndarrays and matrices are 2-D float64
ndarrays throughout the package; the helpers here enforce the contracts
(finiteness, shape) at module boundaries. Arrays stored inside state records
are frozen (non-writeable) so kernels stay pure.
"""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionError, NumericsError, UnstableSystemError

DEFAULT_FD_STEP = 1e-5


def as_vector(x, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"expected dim {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise NumericsError("vector contains NaN/Inf")
    return v


def as_matrix(m, square: bool = False) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericsError("matrix contains NaN/Inf")
    return a


def freeze(a: np.ndarray) -> np.ndarray:
    """Return `a` marked read-only (views of it stay writable-protected)."""
    a.flags.writeable = False
    return a


def check_finite(a: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"{what} contains NaN/Inf")
    return a


class GradientOracle(Protocol):
    """Loss/gradient contract every problem implements.

    eval must be deterministic given (x, minibatch); exact_loss is the
    full-data objective with no stochasticity.
    """

    dim: int
    n_samples: int

    def eval(self, x: np.ndarray, minibatch: Sequence[int]) -> tuple[float, np.ndarray]: ...

    def exact_loss(self, x: np.ndarray) -> float: ...


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a*x + y, inputs untouched."""
    if x.shape != y.shape:
        raise DimensionError(f"axpy shapes differ: {x.shape} vs {y.shape}")
    if not np.isfinite(a):
        raise NumericsError("axpy scalar is not finite")
    return check_finite(a * x + y, "axpy result")


def finite_diff_grad(oracle, x: np.ndarray, minibatch, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient (f(x+h e_j) - f(x-h e_j)) / 2h.

    The independent check for every hand-written gradient in `problems`.
    """
    if h <= 0:
        raise NumericsError("finite-difference step must be > 0")
    x = as_vector(x)
    g = np.empty_like(x)
    for j in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fp, _ = oracle.eval(xp, minibatch)
        fm, _ = oracle.eval(xm, minibatch)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericsError("oracle returned non-finite loss during finite differences")
        g[j] = (fp - fm) / (2.0 * h)
    return g


def spectral_radius(M: np.ndarray, tol: float = 1e-12) -> float:
    """Largest eigenvalue modulus of a square real matrix.

    n <= 2 uses the closed-form characteristic roots (platform-stable, which
    keeps golden grid files byte-identical); larger matrices use LAPACK's QR
    eigensolver via numpy. Both routes are deterministic for fixed input.
    """
    M = as_matrix(M, square=True)
    if tol <= 0:
        raise NumericsError("tol must be > 0")
    n = M.shape[0]
    if n == 1:
        return abs(M[0, 0])
    if n == 2:
        tr = M[0, 0] + M[1, 1]
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        disc = tr * tr - 4.0 * det
        if disc >= 0.0:
            s = np.sqrt(disc)
            return max(abs((tr + s) / 2.0), abs((tr - s) / 2.0))
        return float(np.sqrt(det))  # complex pair: |lambda|^2 = det
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - tiny matrices converge
        raise NumericsError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(eig)))


def lyapunov_stationary(
    M: np.ndarray,
    Q: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Fixed point of S = M S M^T + Q by iteration from S_0 = 0.

    Requires spectral_radius(M) < 1; Q must be symmetric PSD. Returns S with
    max-abs residual ||S - (M S M^T + Q)|| <= tol, symmetrized each sweep.
    """
    M = as_matrix(M, square=True)
    Q = as_matrix(Q, square=True)
    if M.shape != Q.shape:
        raise DimensionError(f"M and Q shapes differ: {M.shape} vs {Q.shape}")
    if not np.allclose(Q, Q.T, atol=1e-10):
        raise NumericsError("Q must be symmetric")
    r = spectral_radius(M)
    if r >= 1.0:
        raise UnstableSystemError(f"spectral radius {r:.6g} >= 1; no stationary covariance")
    S = np.zeros_like(Q)
    for _ in range(max_iter):
        nxt = M @ S @ M.T + Q
        nxt = 0.5 * (nxt + nxt.T)
        # ||S - (M S M^T + Q)|| is exactly the step size, so S (not nxt)
        # is the iterate that provably meets the residual bound.
        if np.max(np.abs(nxt - S)) <= tol:
            return check_finite(S, "stationary covariance")
        S = nxt
    raise NumericsError(f"Lyapunov fixed point not within {tol} after {max_iter} iterations")

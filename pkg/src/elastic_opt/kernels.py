"""Hot-loop backend selection: compiled Cython kernel with pure fallback.

The only loop in the package that is hot enough to matter is the
stage-recursion Monte Carlo used by the stationary-variance checks (millions
of small matrix-vector rounds). It is implemented twice against one
bit-exact contract:

* ``elastic_opt._kernels``     - Cython/C (built by setup.py)
* ``elastic_opt._kernels_py``  - vectorized NumPy fallback

Both consume the documented splitmix64 + Box-Muller stream (see rng.py):
round k, stage j draws its m_j normals as ceil(m_j/2) uniform pairs, odd
draws discard the trailing sin deviate, and nothing is consumed when
sigma == 0. Set ELASTIC_OPT_PURE=1 to force the fallback; the active choice
is exported as BACKEND. benchmarks/bench_kernels.py times one against the
other.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError

if os.environ.get("ELASTIC_OPT_PURE"):
    from . import _kernels_py as _impl

    BACKEND = "pure"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "pure"


def pack_stages(stages) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stages [(A, B), ...] -> padded C-contiguous (As, Bs, ms) arrays."""
    if not stages:
        raise ConfigError("at least one stage is required")
    d = stages[0][0].shape[0]
    m_max = max(1, max(B.shape[1] for _, B in stages))
    As = np.zeros((len(stages), d, d))
    Bs = np.zeros((len(stages), d, m_max))
    ms = np.zeros(len(stages), dtype=np.int64)
    for j, (A, B) in enumerate(stages):
        if A.shape != (d, d) or B.shape[0] != d:
            raise ConfigError("inconsistent stage shapes")
        As[j] = A
        Bs[j, :, : B.shape[1]] = B
        ms[j] = B.shape[1]
    return np.ascontiguousarray(As), np.ascontiguousarray(Bs), ms


def stage_recursion_moments(
    stages,
    sigma: float,
    s0: np.ndarray,
    n_rounds: int,
    burn_in: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-coordinate variance of the state at round boundaries.

    Iterates s <- A_j s + sigma * B_j xi_j across stages for n_rounds rounds
    and accumulates first/second moments for rounds >= burn_in.
    """
    if n_rounds <= burn_in:
        raise ConfigError("n_rounds must exceed burn_in")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    As, Bs, ms = pack_stages(stages)
    s0 = np.ascontiguousarray(s0, dtype=np.float64)
    if s0.shape != (As.shape[1],):
        raise ConfigError("s0 dimension does not match the stages")
    mean, var = _impl.stage_recursion_moments(
        As, Bs, ms, float(sigma), s0, int(n_rounds), int(burn_in), int(seed) & ((1 << 64) - 1)
    )
    return mean, var

"""Desk-scale objectives with exact hand-written gradients.

Stand-ins for the full-scale deep-network benchmarks: a noisy quadratic (the
substrate of the stability analysis), a convex logistic-regression problem on
synthetic two-Gaussian data, and a tiny tanh MLP for a nonconvex case. All
three satisfy the GradientOracle contract and pass central-difference checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import as_matrix, as_vector, check_finite, freeze
from .errors import ConfigError, ParseError
from .rng import RngState, normal_block, substream

_NOISE_TAG = 0x6E6F6973  # stream key tag so problem noise never collides with sampling


@dataclass(frozen=True)
class DataShard:
    """One worker's slice of the sample indices.

    Sampling policy is with-replacement uniform over the shard; draws come
    from the worker's own counter stream so they are reproducible and
    independent of every other worker.
    """

    worker_id: int
    indices: np.ndarray

    def draw(self, rng: RngState, batch_size: int) -> tuple[np.ndarray, RngState]:
        pos, rng = rng.integers(len(self.indices), batch_size)
        return self.indices[pos], rng


def shard(n_samples: int, p: int, seed: int) -> list[DataShard]:
    """Partition [0, n_samples) into p shards, sizes differing by <= 1.

    A seeded permutation is split contiguously; same seed, same shards.
    """
    if p < 1:
        raise ConfigError("p must be >= 1")
    if n_samples < p:
        raise ConfigError(f"cannot shard {n_samples} samples across {p} workers")
    perm = _seeded_permutation(n_samples, substream(seed, 0x73686172))
    base, extra = divmod(n_samples, p)
    shards = []
    start = 0
    for i in range(p):
        size = base + (1 if i < extra else 0)
        shards.append(DataShard(i, freeze(np.sort(perm[start : start + size]))))
        start += size
    return shards


def _seeded_permutation(n: int, seed: int) -> np.ndarray:
    # argsort of one uniform block: vectorized, deterministic (stable sort).
    from .rng import uniform_block

    return np.argsort(uniform_block(seed, 0, n), kind="stable").astype(np.int64)


@dataclass(frozen=True)
class QuadraticProblem:
    """f(x) = x^T H x / 2 - b^T x with optional Gaussian gradient noise.

    The minibatch index k selects a fixed noise vector xi_k (a pure function
    of k), and the minibatch loss adds sigma * <mean_k xi_k, x>, so the noisy
    gradient H x - b + sigma * mean_k xi_k is exactly the gradient of the
    reported loss; finite-difference checks hold even with sigma > 0.
    """

    H: np.ndarray
    b: np.ndarray
    noise_sigma: float
    x_star: np.ndarray
    noise_seed: int
    n_samples: int = 1_000_000

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def _noise(self, minibatch) -> np.ndarray:
        idx = np.asarray(minibatch, dtype=np.int64)
        acc = np.zeros(self.dim)
        for k in idx:
            acc += normal_block(substream(self.noise_seed, int(k)), 0, self.dim)
        return acc / len(idx)

    def eval(self, x, minibatch) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        hx = self.H @ x
        loss = 0.5 * float(x @ hx) - float(self.b @ x)
        grad = hx - self.b
        if self.noise_sigma > 0.0:
            xi = self._noise(minibatch)
            loss += self.noise_sigma * float(xi @ x)
            grad = grad + self.noise_sigma * xi
        return loss, check_finite(grad, "quadratic gradient")

    def exact_loss(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * float(x @ (self.H @ x)) - float(self.b @ x)


def make_quadratic(dim: int, condition_number: float, noise_sigma: float, seed: int) -> QuadraticProblem:
    """Random-rotation quadratic with eigenvalues exactly spanning [1, cond].

    Eigenvalues sit on the geometric grid cond^(j/(dim-1)) (log-uniform,
    endpoints pinned); the rotation is the Q factor of a seeded Gaussian
    matrix with R's diagonal signs fixed, so the problem is a pure function
    of (dim, condition_number, seed). dim == 1 uses H = [[1]].
    """
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    if condition_number < 1:
        raise ConfigError("condition_number must be >= 1")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")
    if dim == 1:
        eigs = np.array([1.0])
        rot = np.array([[1.0]])
    else:
        eigs = condition_number ** (np.arange(dim) / (dim - 1))
        gauss = normal_block(substream(seed, 0x726F74), 0, dim * dim).reshape(dim, dim)
        rot, r = np.linalg.qr(gauss)
        rot = rot * np.sign(np.diag(r))
    H = rot @ np.diag(eigs) @ rot.T
    H = 0.5 * (H + H.T)
    b = normal_block(substream(seed, 0x62), 0, dim)
    x_star = np.linalg.solve(H, b)
    return QuadraticProblem(
        H=freeze(H),
        b=freeze(b),
        noise_sigma=float(noise_sigma),
        x_star=freeze(x_star),
        noise_seed=substream(seed, _NOISE_TAG),
    )


@dataclass(frozen=True)
class LogisticProblem:
    """L2-regularized logistic regression, labels in {-1, +1}.

    Minibatch loss is the exact average of log(1 + exp(-y_i w.f_i)) over the
    selected rows plus (l2/2)||w||^2.
    """

    features: np.ndarray
    labels: np.ndarray
    l2: float = 0.0

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def eval(self, x, minibatch) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        idx = np.asarray(minibatch, dtype=np.int64)
        f = self.features[idx]
        y = self.labels[idx]
        margins = y * (f @ x)
        loss = float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * self.l2 * float(x @ x)
        # d/dm log(1+e^-m) = -sigmoid(-m)
        coef = -_sigmoid(-margins) * y
        grad = (f.T @ coef) / len(idx) + self.l2 * x
        return loss, check_finite(grad, "logistic gradient")

    def exact_loss(self, x) -> float:
        loss, _ = self.eval(x, np.arange(self.n_samples))
        return loss

    def accuracy(self, x, minibatch=None) -> float:
        idx = np.arange(self.n_samples) if minibatch is None else np.asarray(minibatch)
        pred = np.sign(self.features[idx] @ np.asarray(x))
        pred[pred == 0] = 1.0
        return float(np.mean(pred == self.labels[idx]))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def make_two_gaussians(n: int, d: int, separation: float, seed: int) -> LogisticProblem:
    """n/2 samples per class from N(+-separation*u, I), u the first axis."""
    if n < 2:
        raise ConfigError("n must be >= 2")
    if d < 1:
        raise ConfigError("d must be >= 1")
    half = n // 2
    n = 2 * half
    z = normal_block(substream(seed, 0x3267), 0, n * d).reshape(n, d)
    labels = np.concatenate([np.ones(half), -np.ones(half)])
    z[:half, 0] += separation
    z[half:, 0] -= separation
    return LogisticProblem(features=freeze(z), labels=freeze(labels))


@dataclass(frozen=True)
class TinyMLPProblem:
    """One-hidden-layer tanh network with squared-error loss.

    Weights are flattened as [W1 (hidden x d), b1, w2, b2]. Targets live in
    [-1, 1]; backprop is written out by hand and checked against finite
    differences.
    """

    features: np.ndarray
    targets: np.ndarray
    hidden: int

    @property
    def dim(self) -> int:
        d = self.features.shape[1]
        return self.hidden * d + self.hidden + self.hidden + 1

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def _unpack(self, x: np.ndarray):
        d, h = self.features.shape[1], self.hidden
        i = 0
        W1 = x[i : i + h * d].reshape(h, d); i += h * d
        b1 = x[i : i + h]; i += h
        w2 = x[i : i + h]; i += h
        b2 = x[i]
        return W1, b1, w2, b2

    def eval(self, x, minibatch) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        idx = np.asarray(minibatch, dtype=np.int64)
        W1, b1, w2, b2 = self._unpack(x)
        f = self.features[idx]
        t = self.targets[idx]
        a = f @ W1.T + b1
        hphi = np.tanh(a)
        out = hphi @ w2 + b2
        err = out - t
        m = len(idx)
        loss = 0.5 * float(err @ err) / m
        dout = err / m
        gw2 = hphi.T @ dout
        gb2 = float(np.sum(dout))
        dh = np.outer(dout, w2) * (1.0 - hphi * hphi)
        gW1 = dh.T @ f
        gb1 = dh.sum(axis=0)
        grad = np.concatenate([gW1.ravel(), gb1, gw2, [gb2]])
        return loss, check_finite(grad, "mlp gradient")

    def exact_loss(self, x) -> float:
        loss, _ = self.eval(x, np.arange(self.n_samples))
        return loss

    def init_params(self, seed: int) -> np.ndarray:
        """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, seeded."""
        d, h = self.features.shape[1], self.hidden
        u, _ = RngState(substream(seed, 0x696E6974)).uniforms(self.dim)
        x = 2.0 * u - 1.0
        x[: h * d + h] /= np.sqrt(d)
        x[h * d + h :] /= np.sqrt(h)
        return x


def make_tiny_mlp(n: int, d: int, hidden: int, seed: int) -> TinyMLPProblem:
    """Regression targets from a smooth seeded function of Gaussian inputs."""
    if n < 1 or d < 1 or hidden < 1:
        raise ConfigError("n, d, hidden must all be >= 1")
    z = normal_block(substream(seed, 0x6D6C70), 0, n * (d + 1)).reshape(n, d + 1)
    f = z[:, :d]
    w = z[:, d]
    targets = np.tanh(f @ np.linspace(1.0, 0.5, d) + 0.1 * w)
    return TinyMLPProblem(features=freeze(f), targets=freeze(targets), hidden=hidden)


def load_csv_dataset(path: str, l2: float = 0.0) -> LogisticProblem:
    """Load `f0,...,f{d-1},label` CSV; labels {-1,1} or {0,1} (0 -> -1)."""
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-1] != "label" or any(
            h != f"f{i}" for i, h in enumerate(header[:-1])
        ):
            raise ParseError("expected header f0,...,f{d-1},label", line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", line=lineno)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"non-numeric cell: {exc}", line=lineno) from exc
    if not rows:
        raise ParseError("dataset has no data rows", line=2)
    data = np.asarray(rows)
    labels = data[:, -1]
    mapped = np.where(labels == 0.0, -1.0, labels)
    if not np.all(np.isin(mapped, (-1.0, 1.0))):
        bad = int(np.argmax(~np.isin(mapped, (-1.0, 1.0))))
        raise ParseError(f"label must be -1/1 or 0/1, got {labels[bad]}", line=bad + 2)
    return LogisticProblem(features=freeze(data[:, :-1].copy()), labels=freeze(mapped), l2=l2)

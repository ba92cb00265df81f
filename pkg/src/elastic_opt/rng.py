"""Deterministic counter-based random numbers.

Every random draw in this package comes from one fixed generator so that
trajectories are reproducible bit-for-bit across runs and across the
simulator / network runtime. The generator is splitmix64 in counter form:

    output_k = mix64((seed + (k + 1) * GAMMA) mod 2**64)        k = 0, 1, ...

with GAMMA = 0x9E3779B97F4A7C15 and mix64 the standard splitmix64 finalizer

    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27; z *= 0x94D049BB133111EB
    z ^= z >> 31

(all arithmetic mod 2**64). Because the stream is a pure function of
(seed, k) it can be generated scalar-by-scalar or in vectorized blocks with
identical results, and substreams never need to be "reserved" in advance.

Derived values:

* uniform in [0, 1):  u_k = (output_k >> 11) * 2**-53
* standard normals: Box-Muller on non-overlapping uniform pairs,
  z0 = sqrt(-2 ln(1 - u_{2q})) cos(2 pi u_{2q+1}) and the matching sin term.
  A request for an odd number of normals discards the trailing sin deviate;
  nothing is cached across calls.
* substream(seed, key) = mix64(seed XOR mix64(key)): an unrelated seed for a
  named purpose (worker id, sample index, ...).

The integer stream is bit-identical on every platform (pure uint64 ops);
floats are deterministic for a given libm and bit-identical between runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U64_GAMMA = np.uint64(GAMMA)
_U64_M1 = np.uint64(_M1)
_U64_M2 = np.uint64(_M2)
_TWO_NEG_53 = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def substream(seed: int, key: int) -> int:
    """Seed for an independent named stream (pure function of inputs)."""
    return mix64((seed & MASK64) ^ mix64(key & MASK64))


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _U64_M1
    z = z ^ (z >> np.uint64(27))
    z = z * _U64_M2
    return z ^ (z >> np.uint64(31))


def raw_block(seed: int, start: int, count: int) -> np.ndarray:
    """outputs k = start .. start+count-1 as uint64, vectorized."""
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_array(np.uint64(seed & MASK64) + k * _U64_GAMMA)


def uniform_block(seed: int, start: int, count: int) -> np.ndarray:
    return (raw_block(seed, start, count) >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53


def normal_block(seed: int, start_pair: int, count: int) -> np.ndarray:
    """`count` standard normals from uniform pairs starting at pair index.

    Pair q consumes uniforms at counters (2q, 2q+1). Consecutive calls must
    advance start_pair by ceil(count/2); an odd count discards the last sin
    deviate, exactly as the scalar generator does.
    """
    pairs = (count + 1) // 2
    u = uniform_block(seed, 2 * start_pair, 2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    theta = (2.0 * np.pi) * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count]


@dataclass(frozen=True)
class RngState:
    """Immutable position in a splitmix64 counter stream.

    Draw methods return the values plus the advanced state; nothing mutates,
    so kernels can be pure functions of explicit state.
    """

    seed: int
    counter: int = 0

    def next_u64(self) -> tuple[int, "RngState"]:
        k = self.counter
        v = mix64((self.seed + ((k + 1) * GAMMA & MASK64)) & MASK64)
        return v, RngState(self.seed, k + 1)

    def uniforms(self, count: int) -> tuple[np.ndarray, "RngState"]:
        u = uniform_block(self.seed, self.counter, count)
        return u, RngState(self.seed, self.counter + count)

    def normals(self, count: int) -> tuple[np.ndarray, "RngState"]:
        if self.counter % 2:
            raise ValueError("normal draws require an even (pair-aligned) counter")
        pairs = (count + 1) // 2
        z = normal_block(self.seed, self.counter // 2, count)
        return z, RngState(self.seed, self.counter + 2 * pairs)

    def integers(self, bound: int, count: int) -> tuple[np.ndarray, "RngState"]:
        """`count` integers uniform on [0, bound) via 64-bit floor-scaling.

        floor(u * bound) with u the 53-bit uniform: bias is < bound * 2**-53,
        negligible for the dataset sizes used here (documented).
        """
        u, state = self.uniforms(count)
        return np.minimum((u * bound).astype(np.int64), bound - 1), state

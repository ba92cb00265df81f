"""Pure NumPy fallback for the stage-recursion Monte Carlo.

Noise for whole blocks of rounds is generated vectorized from the counter
stream, then the (inherently sequential) recursion runs as a small-matrix
loop. Stream consumption is identical to the compiled kernel: stage j uses
pairs_j = ceil(m_j/2) uniform pairs per round, in stage order.
"""

from __future__ import annotations

import numpy as np

from .rng import normal_block

_BLOCK = 32768


def stage_recursion_moments(As, Bs, ms, sigma, s0, n_rounds, burn_in, seed):
    n_stages, d = As.shape[0], As.shape[1]
    pairs = [(int(m) + 1) // 2 for m in ms]
    pairs_per_round = sum(pairs)
    s = s0.copy()
    acc = np.zeros(d)
    acc2 = np.zeros(d)
    pair_cursor = 0
    done = 0
    while done < n_rounds:
        count = min(_BLOCK, n_rounds - done)
        if sigma > 0.0 and pairs_per_round:
            z = normal_block(seed, pair_cursor, 2 * pairs_per_round * count)
            z = z.reshape(count, 2 * pairs_per_round)
            pair_cursor += pairs_per_round * count
        else:
            z = None
        states = np.empty((count, d))
        for k in range(count):
            off = 0
            for j in range(n_stages):
                s = As[j] @ s
                m = int(ms[j])
                if z is not None and m:
                    s += sigma * (Bs[j, :, :m] @ z[k, off : off + m])
                off += 2 * pairs[j]
            states[k] = s
        lo = max(burn_in - done, 0)
        if lo < count:
            tail = states[lo:]
            acc += tail.sum(axis=0)
            acc2 += np.einsum("ij,ij->j", tail, tail)
        done += count
    n_eff = n_rounds - burn_in
    mean = acc / n_eff
    var = acc2 / n_eff - mean * mean
    return mean, var

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stage-recursion Monte Carlo (see elastic_opt.kernels).

Implements the identical splitmix64 + Box-Muller stream as rng.py: uniform
counter k yields mix64(seed + (k+1)*GAMMA) >> 11 scaled to [0,1); normals
come from non-overlapping uniform pairs in stage order.
"""

from libc.math cimport cos, log, sin, sqrt
from libc.stdint cimport int64_t, uint64_t

import numpy as np

cdef double TWO_NEG_53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586476925286766559
cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform_at(uint64_t seed, uint64_t k) nogil:
    return <double>(mix64(seed + (k + 1) * GAMMA) >> 11) * TWO_NEG_53


def stage_recursion_moments(
    double[:, :, ::1] As,
    double[:, :, ::1] Bs,
    int64_t[::1] ms,
    double sigma,
    double[::1] s0,
    int n_rounds,
    int burn_in,
    seed,
):
    cdef uint64_t useed = <uint64_t>(<object>seed)
    cdef int n_stages = As.shape[0]
    cdef int d = As.shape[1]
    cdef int k, j, r, c, m, q, npairs
    cdef uint64_t pair_cursor = 0
    cdef double u1, u2, rad, theta, z0, z1, val

    s_arr = np.array(s0, dtype=np.float64)
    tmp_arr = np.zeros(d)
    acc_arr = np.zeros(d)
    acc2_arr = np.zeros(d)
    cdef double[::1] s = s_arr
    cdef double[::1] tmp = tmp_arr
    cdef double[::1] acc = acc_arr
    cdef double[::1] acc2 = acc2_arr

    with nogil:
        for k in range(n_rounds):
            for j in range(n_stages):
                # tmp = A_j @ s
                for r in range(d):
                    val = 0.0
                    for c in range(d):
                        val += As[j, r, c] * s[c]
                    tmp[r] = val
                m = <int>ms[j]
                if sigma > 0.0 and m > 0:
                    npairs = (m + 1) >> 1
                    for q in range(npairs):
                        u1 = uniform_at(useed, 2 * pair_cursor)
                        u2 = uniform_at(useed, 2 * pair_cursor + 1)
                        pair_cursor += 1
                        rad = sqrt(-2.0 * log(1.0 - u1))
                        theta = TWO_PI * u2
                        z0 = rad * cos(theta)
                        for r in range(d):
                            tmp[r] += sigma * Bs[j, r, 2 * q] * z0
                        if 2 * q + 1 < m:
                            z1 = rad * sin(theta)
                            for r in range(d):
                                tmp[r] += sigma * Bs[j, r, 2 * q + 1] * z1
                for r in range(d):
                    s[r] = tmp[r]
            if k >= burn_in:
                for r in range(d):
                    acc[r] += s[r]
                    acc2[r] += s[r] * s[r]

    n_eff = n_rounds - burn_in
    mean = acc_arr / n_eff
    var = acc2_arr / n_eff - mean * mean
    return mean, var

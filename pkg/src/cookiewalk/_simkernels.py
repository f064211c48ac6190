"""Numba kernels for the walk simulator.

Randomness is a counter-based splitmix64 stream so runs are
bit-reproducible across platforms and independent across reps:

* per-rep base state: mix64(seed XOR rep),
* i-th draw: u = mix64(base + (i+1) * PHI64),
* uniform: (u >> 11) * 2^-53, step right iff uniform < p.

All state updates are unsigned 64-bit with wraparound; path decisions
never touch floating point except the final comparison against p.
"""

import numpy as np
from numba import njit

U64 = np.uint64
PHI64 = U64(0x9E3779B97F4A7C15)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D4ECAA485931EB)
    return z ^ (z >> U64(31))


@njit(cache=True)
def walk_to_level(m, p, n, seed, rep, cap):
    """One cookie walk from 0 until first hitting level n.

    Returns (status, steps, pos, k_neg, hit_minus_one, u) where u holds
    the left-jump counts per site 0..n.  status: 0 ok, 1 step cap hit
    (pos is then the stranded position).
    """
    base = mix64(U64(seed) ^ U64(rep))
    ctr = U64(0)
    neg = 256
    visits = np.zeros(n + 1 + neg, dtype=np.uint8)
    u = np.zeros(n + 1, dtype=np.int64)
    pos = 0
    steps = 0
    k_neg = 0
    hit = False
    visits[neg] = 1
    status = 0
    while pos < n:
        if steps >= cap:
            status = 1
            break
        v = visits[pos + neg]
        pr = p[v - 1] if v <= m else 0.5
        ctr += U64(1)
        draw = mix64(base + ctr * PHI64)
        if np.float64(draw >> U64(11)) * _INV53 < pr:
            pos += 1
        else:
            if pos >= 0:
                u[pos] += 1
            pos -= 1
            if pos + neg < 0:
                grown = np.zeros(n + 1 + 2 * neg, dtype=np.uint8)
                grown[neg:] = visits
                visits = grown
                neg *= 2
        steps += 1
        if pos < 0:
            k_neg += 1
            if pos == -1:
                hit = True
        seen = visits[pos + neg]
        if seen <= m:
            visits[pos + neg] = seen + 1
    return status, steps, pos, k_neg, hit, u


@njit(cache=True)
def walk_batch(m, p, n, reps, seed, cap):
    """reps independent walks to level n; per-rep aggregates only.

    Returns (status, t, u0, u1, k_neg, u_sum, hit) arrays.
    """
    status = np.zeros(reps, dtype=np.uint8)
    t = np.zeros(reps, dtype=np.int64)
    u0 = np.zeros(reps, dtype=np.int64)
    u1 = np.zeros(reps, dtype=np.int64)
    k_neg = np.zeros(reps, dtype=np.int64)
    u_sum = np.zeros(reps, dtype=np.int64)
    hit = np.zeros(reps, dtype=np.uint8)
    for rep in range(reps):
        st, steps, k, h, u = walk_to_level(m, p, n, seed, rep, cap)
        status[rep] = st
        t[rep] = steps
        u0[rep] = u[0]
        u1[rep] = u[1] if n >= 1 else 0
        k_neg[rep] = k
        u_sum[rep] = u.sum()
        hit[rep] = h
    return status, t, u0, u1, k_neg, u_sum, hit

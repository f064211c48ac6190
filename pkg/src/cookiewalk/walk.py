"""Monte Carlo simulator of the cookie random walk.

Tracks the exact path functionals used by the reduction to the
migration chain: the hitting time T_n of level n, the left-jump counts
U_i (site i to i-1, for i = 0..n), and the time K_n spent in the
negative half-line.  Every record satisfies the integer identity

    T_n = K_n - U_0 + n + 2 * sum_k U_k

exactly.  Reps use independent counter-based RNG streams derived from
(seed, rep), so results are bit-reproducible and order-independent; the
draw scheme is documented in _simkernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _simkernels
from .env import CookieEnv, alpha as env_alpha
from .errors import RegimeError, StepCapExceeded
from .kernel import DistTable

DEFAULT_STEP_CAP = 10**8
# reaching a level this high without hitting -1 counts as "never"
DEFAULT_NEVER_HIT_LEVEL = 10**4


@dataclass(frozen=True)
class WalkRecord:
    """Summary of one simulated trajectory up to T_n."""

    n: int
    t_n: int
    u: np.ndarray  # left jumps per site, index 0..n
    k_n: int
    returns_to_origin: int
    hit_minus_one: bool

    def identity_holds(self) -> bool:
        return self.t_n == self.k_n - int(self.u[0]) + self.n + 2 * int(self.u.sum())


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    reps: int
    seed: int


def step_rule(env: CookieEnv, visits_so_far: int) -> float:
    """Right-step probability given the number of prior visits."""
    nxt = visits_so_far + 1
    return env.p[nxt - 1] if nxt <= env.m else 0.5


def _pvec(env: CookieEnv) -> np.ndarray:
    return np.asarray(env.p, dtype=np.float64)


def simulate_to_level(
    env: CookieEnv, n: int, seed: int, cap: int = DEFAULT_STEP_CAP, rep: int = 0
) -> WalkRecord:
    """Simulate one walk from 0 to level n; raises StepCapExceeded when
    the cap is hit first (expected in the recurrent regime)."""
    status, steps, k_neg, hit, u = _simkernels.walk_to_level(
        env.m, _pvec(env), n, seed, rep, cap
    )
    if status != 0:
        raise StepCapExceeded(steps, int(np.argmax(u == u.max())))
    returns = int(u[0] + (u[1] if n >= 1 else 0))
    return WalkRecord(
        n=n, t_n=int(steps), u=u, k_n=int(k_neg),
        returns_to_origin=returns, hit_minus_one=bool(hit),
    )


def run_batch(env: CookieEnv, n: int, reps: int, seed: int, cap: int = DEFAULT_STEP_CAP):
    """Aggregate arrays for reps independent walks (see _simkernels)."""
    return _simkernels.walk_batch(env.m, _pvec(env), n, reps, seed, cap)


def _mc(values: np.ndarray, reps: int, seed: int) -> McEstimate:
    sd = float(values.std(ddof=1)) if reps > 1 else 0.0
    return McEstimate(float(values.mean()), sd / math.sqrt(reps), reps, seed)


def estimate_speed_mc(
    env: CookieEnv, n: int, reps: int, seed: int, cap: int = DEFAULT_STEP_CAP
) -> McEstimate:
    """Mean of n / T_n over reps; deterministic in (seed, reps, n).

    Finite-level bias: E[n/T_n] exceeds the limiting speed by a term
    decaying like n^-(alpha-1) for 1 < alpha < 2, which can dominate the
    standard error at moderate n (see ledger notes in the repo docs).
    """
    status, t, *_ = run_batch(env, n, reps, seed, cap)
    if status.any():
        raise StepCapExceeded(cap, n)
    return _mc(n / t.astype(np.float64), reps, seed)


def estimate_never_hit_minus_one(
    env: CookieEnv,
    level_l: int = DEFAULT_NEVER_HIT_LEVEL,
    reps: int = 10**4,
    seed: int = 0,
    cap: int = DEFAULT_STEP_CAP,
) -> McEstimate:
    """Fraction of walks reaching level_l before touching -1.

    Upper-biased at finite level_l; the bias decreases monotonically in
    level_l (no rate available, the default is a heuristic).
    """
    status, t, u0, u1, k, us, hit = run_batch(env, level_l, reps, seed, cap)
    if status.any():
        raise StepCapExceeded(cap, level_l)
    return _mc(1.0 - hit.astype(np.float64), reps, seed)


def sample_u0_distribution(
    env: CookieEnv, n: int, reps: int, seed: int, cap: int = DEFAULT_STEP_CAP
) -> DistTable:
    """Empirical law of U_0 (left jumps from the origin before T_n)."""
    if env_alpha(env) <= 0.0:
        raise RegimeError("sample_u0_distribution requires a transient environment")
    if n == 0:
        return DistTable(np.array([1.0]), 0.0, 0, flagged=False)
    status, t, u0, *_ = run_batch(env, n, reps, seed, cap)
    if status.any():
        raise StepCapExceeded(cap, n)
    counts = np.bincount(u0)
    return DistTable(counts / reps, 0.0, counts.size - 1, flagged=False)


def count_returns_to_origin(
    env: CookieEnv, level_l: int, seed: int, cap: int = DEFAULT_STEP_CAP, rep: int = 0
) -> int:
    """U_0 + U_1 from a single record: returns to 0 before level_l."""
    rec = simulate_to_level(env, level_l, seed, cap=cap, rep=rep)
    return rec.returns_to_origin


def returns_pgf_mc(
    env: CookieEnv,
    s: float,
    level_l: int = 4000,
    reps: int = 10**5,
    seed: int = 0,
    cap: int = DEFAULT_STEP_CAP,
) -> McEstimate:
    """Empirical E[s^R] with R the returns to the origin before level_l."""
    status, t, u0, u1, *_ = run_batch(env, level_l, reps, seed, cap)
    if status.any():
        raise StepCapExceeded(cap, level_l)
    r = (u0 + u1).astype(np.float64)
    return _mc(s**r, reps, seed)

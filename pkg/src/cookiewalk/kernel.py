"""Exact law of the migration variables A_j.

A_j is the number of failures before the (j+1)-th success in the
inhomogeneous Bernoulli sequence with success probabilities
p_1, ..., p_M, 1/2, 1/2, ...  These laws are the transition rows of the
migration chain: row j of the kernel is P{A_j = .}.

Two representations are provided:

* a truncated table (``DistTable``) computed by dynamic programming over
  the first M trials with an exact NegBinomial(r, 1/2) tail appended by
  convolution, and
* a closed form (``PgfClosedForm``) for E[s^{A_j}] as a finite sum of
  terms coef * s^f * (2-s)^(-r), one per DP end state, which supports
  exact derivatives at s = 1.

For j >= M the law factorizes as A_{M-1} plus j-M+1 independent
Geometric(1/2) failures, so rows extend by repeated geometric
convolution; ``iter_rows`` streams them in O(cap) memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, lgamma, exp

import numpy as np
from scipy.signal import lfilter

from .env import CookieEnv
from .errors import DomainError

RESIDUAL_TOL = 1e-12
DEFAULT_CAP = 4096


@dataclass
class DistTable:
    """Probability mass on 0..support_cap with explicit leftover mass."""

    atoms: np.ndarray
    residual: float
    support_cap: int
    flagged: bool = False  # residual above tolerance (heavy tail or cap too small)

    def survival(self) -> np.ndarray:
        """S[n] = P{X > n} for n = 0..support_cap."""
        return self.residual + np.concatenate(
            (np.cumsum(self.atoms[::-1])[::-1][1:], [0.0])
        )

    def total(self) -> float:
        return float(self.atoms.sum() + self.residual)


@dataclass(frozen=True)
class PgfClosedForm:
    """E[s^A] = sum coef * s^f * (2-s)^(-r) over terms (coef, f, r)."""

    terms: tuple = field(default_factory=tuple)


def bernoulli_prob(env: CookieEnv, i: int) -> float:
    """Success probability of trial i >= 1."""
    if i < 1:
        raise DomainError(f"trial index must be >= 1, got {i}")
    return env.p[i - 1] if i <= env.m else 0.5


def geometric_convolve(q: np.ndarray) -> np.ndarray:
    """Convolve a mass vector with Geometric(1/2) failures, same support.

    (q * geom)[k] = sum_g q[k-g] (1/2)^(g+1) satisfies the linear
    recurrence c[k] = (q[k] + c[k-1]) / 2; mass beyond the support is
    dropped (tracked by callers as residual).
    """
    return lfilter([0.5], [1.0, -0.5], q)


def negative_binomial_row(r: int, cap: int) -> np.ndarray:
    """NB(r, 1/2) failure-count pmf on 0..cap (r = 0 gives a point mass)."""
    out = np.zeros(cap + 1)
    out[0] = 1.0
    for _ in range(r):
        out = geometric_convolve(out)
    return out


def _dp_end_states(env: CookieEnv, j: int):
    """Run the trial DP; yield absorbed (prob, failures, 0) and open
    (prob, failures, successes-still-needed) end states."""
    absorbed = []
    states = {(0, 0): 1.0}  # (successes, failures) -> prob
    for i in range(1, env.m + 1):
        pi = env.p[i - 1]
        nxt = {}
        for (u, f), pr in states.items():
            if u + 1 == j + 1:
                absorbed.append((pr * pi, f, 0))
            else:
                key = (u + 1, f)
                nxt[key] = nxt.get(key, 0.0) + pr * pi
            if pi < 1.0:
                key = (u, f + 1)
                nxt[key] = nxt.get(key, 0.0) + pr * (1.0 - pi)
        states = nxt
    open_states = [(pr, f, j + 1 - u) for (u, f), pr in states.items()]
    return absorbed, open_states


def a_distribution(env: CookieEnv, j: int, cap: int = DEFAULT_CAP) -> DistTable:
    """P{A_j = i} for i = 0..cap, exact within the support.

    DP over the first M trials; states that still need r successes after
    trial M get an exact NegBinomial(r, 1/2) tail at their failure
    offset.  For j >= M this equals a_distribution(M-1) convolved with
    NegBinomial(j-M+1, 1/2).
    """
    if j < 0:
        raise DomainError(f"j must be >= 0, got {j}")
    if j >= env.m:
        out = a_distribution(env, env.m - 1, cap).atoms.copy()
        for _ in range(j - env.m + 1):
            out = geometric_convolve(out)
    else:
        out = np.zeros(cap + 1)
        absorbed, open_states = _dp_end_states(env, j)
        for pr, f, _ in absorbed:
            if f <= cap:
                out[f] += pr
        nb_cache = {}
        for pr, f, r in open_states:
            if f > cap:
                continue
            if r not in nb_cache:
                nb_cache[r] = negative_binomial_row(r, cap)
            out[f:] += pr * nb_cache[r][: cap + 1 - f]
    residual = max(0.0, 1.0 - float(out.sum()))
    return DistTable(out, residual, cap, flagged=residual > RESIDUAL_TOL)


def iter_rows(env: CookieEnv, cap: int, j_max: int):
    """Yield kernel rows 0..j_max on support 0..cap in O(cap) memory.

    Rows below M come from the DP; row j+1 = row j (*) Geometric(1/2)
    for j >= M-1.  Each yielded row seeds the next convolution, so
    callers must not mutate it (copy first).
    """
    for j in range(min(env.m, j_max + 1)):
        row = a_distribution(env, j, cap).atoms
        yield j, row
    if j_max >= env.m:
        for j in range(env.m, j_max + 1):
            row = geometric_convolve(row)
            yield j, row


def a_pgf_form(env: CookieEnv, j: int) -> PgfClosedForm:
    """Closed form of E[s^{A_j}], exact for s in (0, 2)."""
    if j < 0:
        raise DomainError(f"j must be >= 0, got {j}")
    extra = 0
    if j >= env.m:
        extra = j - env.m + 1  # factored Geometric(1/2) failures
        j = env.m - 1
    absorbed, open_states = _dp_end_states(env, j)
    terms = tuple(
        (pr, f, r + extra) for pr, f, r in absorbed + open_states if pr > 0.0
    )
    return PgfClosedForm(terms=terms)


def a_pgf_eval(form: PgfClosedForm, s: float) -> float:
    """Evaluate a closed form at s in (0, 2)."""
    if not (0.0 < s < 2.0):
        raise DomainError(f"s = {s} outside (0, 2)")
    return float(sum(c * s**f * (2.0 - s) ** (-r) for c, f, r in form.terms))


def a_pgf_derivatives_at_1(form: PgfClosedForm, order: int = 4):
    """Derivatives d^k/ds^k E[s^A] at s = 1 for k = 0..order, exact.

    Each term s^f (2-s)^(-r) differentiates to products of falling
    factorials of f and rising factorials of r; no finite differencing.
    """
    out = np.zeros(order + 1)
    for c, f, r in form.terms:
        # falling[a] = f (f-1) ... (f-a+1); rising[b] = r (r+1) ... (r+b-1)
        falling = np.zeros(order + 1)
        rising = np.zeros(order + 1)
        falling[0] = rising[0] = 1.0
        for a in range(1, order + 1):
            falling[a] = falling[a - 1] * (f - a + 1)
            rising[a] = rising[a - 1] * (r + a - 1)
        for k in range(order + 1):
            out[k] += c * sum(
                comb(k, a) * falling[a] * rising[k - a] for a in range(k + 1)
            )
    return out


def mean_a_closed_form(env: CookieEnv) -> float:
    """E[A_{M-1}] = 2 sum_i (1 - p_i)."""
    return 2.0 * sum(1.0 - x for x in env.p)


def _binom_times_half_pow(n: int, k: int, j: int) -> float:
    """C(n, k) * (1/2)^j without overflow; exact integers for small n."""
    if k < 0 or k > n:
        return 0.0
    if n < 60:
        return comb(n, k) * 0.5**j
    log_c = lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)
    return exp(log_c - j * np.log(2.0))


def a_m1_distribution_identity(env: CookieEnv, j: int) -> float:
    """P{A_{M-1} = j} for j >= 1 via the failure-count decomposition.

    Sums P{L = l} C(j-1, l-1) (1/2)^j over l = 1..min(M, j), where L is
    the Poisson-binomial number of failures among the M cookie trials.
    Independent of the DP; used as a cross-check.
    """
    if j < 1:
        raise DomainError(f"identity defined for j >= 1, got {j}")
    # Poisson-binomial law of L over p_1..p_M
    pl = np.zeros(env.m + 1)
    pl[0] = 1.0
    for x in env.p:
        pl[1:] = pl[1:] * x + pl[:-1] * (1.0 - x)
        pl[0] *= x
    return float(
        sum(
            pl[lcount] * _binom_times_half_pow(j - 1, lcount - 1, j)
            for lcount in range(1, min(env.m, j) + 1)
        )
    )

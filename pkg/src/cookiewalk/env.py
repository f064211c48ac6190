"""Cookie environments and the drift-based phase classification.

An environment is a pair (M, p): M cookies per site with strengths
p_1..p_M in [1/2, 1].  Visits beyond the M-th behave as a fair coin.
The scalar

    alpha = sum_i (2 p_i - 1) - 1

splits the phase diagram: alpha <= 0 recurrent, 0 < alpha <= 1 transient
with zero speed, alpha > 1 transient with positive speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import LengthMismatch, OutOfRange

# |alpha - 1| below this is flagged as numerically critical.
CRITICAL_BAND = 1e-9


class Phase(Enum):
    RECURRENT = "Recurrent"
    TRANSIENT_ZERO_SPEED = "TransientZeroSpeed"
    CRITICAL = "Critical"
    TRANSIENT_POSITIVE_SPEED = "TransientPositiveSpeed"


@dataclass(frozen=True)
class CookieEnv:
    """Validated cookie environment (M, p)."""

    m: int
    p: tuple
    degenerate: bool = False  # some p_i == 1

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))


@dataclass(frozen=True)
class PhaseLabel:
    label: Phase
    alpha: float
    critical_band: bool  # |alpha - 1| < CRITICAL_BAND, reported separately


def validate_environment(m, p) -> CookieEnv:
    """Validate (m, p) and return a CookieEnv.

    Raises LengthMismatch if len(p) != m, OutOfRange if any strength is
    outside [1/2, 1].  Environments with some p_i == 1 are accepted and
    carry a ``degenerate`` flag.
    """
    if m < 1:
        raise OutOfRange(f"m must be >= 1, got {m}")
    p = tuple(float(x) for x in p)
    if len(p) != m:
        raise LengthMismatch(f"expected {m} strengths, got {len(p)}")
    for i, x in enumerate(p):
        if not (0.5 <= x <= 1.0):
            raise OutOfRange(f"p_{i + 1} = {x} outside [1/2, 1]")
    return CookieEnv(m=int(m), p=p, degenerate=any(x == 1.0 for x in p))


def alpha(env: CookieEnv) -> float:
    """Drift functional sum(2 p_i - 1) - 1."""
    return sum(2.0 * x - 1.0 for x in env.p) - 1.0


def classify(env: CookieEnv) -> PhaseLabel:
    """Phase label from alpha; exact comparisons, band reported separately."""
    a = alpha(env)
    band = abs(a - 1.0) < CRITICAL_BAND
    if a <= 0.0:
        label = Phase.RECURRENT
    elif a < 1.0:
        label = Phase.TRANSIENT_ZERO_SPEED
    elif a == 1.0:
        label = Phase.CRITICAL
    else:
        label = Phase.TRANSIENT_POSITIVE_SPEED
    return PhaseLabel(label=label, alpha=a, critical_band=band)


def z_unbounded_condition(env: CookieEnv) -> bool:
    """True iff the migration chain started at 0 is a.s. unbounded.

    The condition is #{j <= i : p_j = 1} <= i/2 for every prefix i <= M.
    When it fails the chain is a.s. bounded by M - 1 and the walk has
    positive speed via a finite-state solve.
    """
    ones = 0
    for i, x in enumerate(env.p, start=1):
        if x == 1.0:
            ones += 1
        if ones > i / 2.0:
            return False
    return True


def uniform_env(m, p) -> CookieEnv:
    """Environment with m identical cookies of strength p."""
    return validate_environment(m, (p,) * m)


def critical_strength(m) -> float:
    """Uniform strength with alpha exactly 1: p_c = 1/m + 1/2 (needs m >= 3)."""
    return 1.0 / m + 0.5

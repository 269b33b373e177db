"""Birth-death chains on ``S_0..S_m``: closed forms, linear solves and
Monte Carlo estimators.

The chain moves up with probability ``p``, down with probability ``q`` and
stays put otherwise. Write ``r = q/p``. Absorbing at both ends, the
probability of reaching ``S_m`` before ``S_0`` from ``S_i`` is
``(r**i - 1) / (r**m - 1)``. With ``S_0`` reflecting (it moves to ``S_1``
in one step) the expected time to reach ``S_m`` is

    mu_i = (1 + 1/(q-p)) * (r**m - r**i) / (r - 1) - (m - i) / (q - p).

Both need ``p != q``; the symmetric limits are available behind
``allow_symmetric=True``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels

ABSORBING = "absorbing"
REFLECTING = "reflecting"
_BARRIERS = (ABSORBING, REFLECTING)

# switch to the scaled form of the absorption ratio above this r**m
OVERFLOW_SWITCH = 1e12


class DegenerateBiasError(ValueError):
    """Closed form requested with ``p == q``."""


@dataclass(frozen=True)
class BirthDeathSpec:
    m: int
    p: float
    q: float
    barrier0: str = ABSORBING
    barrierM: str = ABSORBING

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if self.p < 0 or self.q < 0 or self.p + self.q > 1 + 1e-15:
            raise ValueError(f"need p, q >= 0 and p + q <= 1, got p={self.p}, q={self.q}")
        if self.barrier0 not in _BARRIERS or self.barrierM not in _BARRIERS:
            raise ValueError(f"barriers must be one of {_BARRIERS}")

    @property
    def ratio(self) -> float:
        return self.q / self.p

    def _check_index(self, i: int) -> int:
        if int(i) != i or not 0 <= i <= self.m:
            raise ValueError(f"start index {i!r} outside 0..{self.m}")
        return int(i)

    def _check_bias(self, allow_symmetric: bool):
        if self.p <= 0:
            raise DegenerateBiasError("closed forms need p > 0")
        if self.p == self.q and not allow_symmetric:
            raise DegenerateBiasError("closed forms need p != q (pass allow_symmetric=True for the limit)")


def absorption_probability(spec: BirthDeathSpec, i: int, allow_symmetric: bool = False) -> float:
    """Probability of hitting ``S_m`` before ``S_0`` from ``S_i``."""
    if spec.barrier0 != ABSORBING or spec.barrierM != ABSORBING:
        raise ValueError("absorption probability needs both barriers absorbing")
    i = spec._check_index(i)
    spec._check_bias(allow_symmetric)
    m = spec.m
    if i in (0, m):
        return float(i == m)
    if spec.p == spec.q:
        return i / m
    log_r = math.log(spec.ratio)
    if m * log_r > math.log(OVERFLOW_SWITCH):
        # divide through by r**m: r**(i-m) * (1 - r**-i) / (1 - r**-m)
        return math.exp((i - m) * log_r) * math.expm1(-i * log_r) / math.expm1(-m * log_r)
    return math.expm1(i * log_r) / math.expm1(m * log_r)


def expected_time_reflecting(spec: BirthDeathSpec, i: int, allow_symmetric: bool = False) -> float:
    """Expected steps to reach ``S_m`` from ``S_i`` with ``S_0`` reflecting."""
    if spec.barrier0 != REFLECTING:
        raise ValueError("expected hitting time needs a reflecting barrier at S_0")
    i = spec._check_index(i)
    spec._check_bias(allow_symmetric)
    m, p, q = spec.m, spec.p, spec.q
    if i == m:
        return 0.0
    if p == q:
        return (m - i) + (m * (m - 1) - i * (i - 1)) / (2 * p)
    r = spec.ratio
    try:
        geo = (r**m - r**i) / (r - 1)
    except OverflowError:
        return math.inf
    return (1 + 1 / (q - p)) * geo - (m - i) / (q - p)


class TimeRegimes(NamedTuple):
    drift: float  # (m - i) / (p (1 - r)): order of the time when p > q
    exponential: float  # r**m / (r - 1): lower-bound order when q > p


def time_regimes(spec: BirthDeathSpec, i: int) -> TimeRegimes:
    """Advisory growth orders of the reflecting hitting time.

    Only the one matching the sign of ``p - q`` is meaningful; the other is
    returned as ``nan``.
    """
    i = spec._check_index(i)
    spec._check_bias(False)
    r = spec.ratio
    if r < 1:
        return TimeRegimes((spec.m - i) / (spec.p * (1 - r)), math.nan)
    try:
        expo = r**spec.m / (r - 1)
    except OverflowError:
        expo = math.inf
    return TimeRegimes(math.nan, expo)


def line_win_probability(m: int) -> float:
    """All-g probability for the 3-state protocol on ``line(m)`` started with
    the leftmost vertex green and the rest red."""
    if int(m) != m or m < 2:
        raise ValueError(f"m must be an integer >= 2, got {m!r}")
    return 1 / (2 * (m - 1))


# ---------------------------------------------------------------- general chains

def _as_rates(values, m: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(values, dtype=float), (m + 1,)).copy()
    if (arr < 0).any():
        raise ValueError(f"{name} must be non-negative")
    return arr


def solve_absorption(m: int, p, q) -> np.ndarray:
    """``h_i = P(hit m before 0 | start i)`` for per-state rates.

    ``p`` and ``q`` are scalars or length ``m+1`` arrays (end entries
    unused). The increments ``h_{j+1} - h_j`` follow
    ``p_j (h_{j+1} - h_j) = q_j (h_j - h_{j-1})``, so ``h`` is a ratio of
    positive partial sums and no cancellation occurs.
    """
    p = _as_rates(p, m, "p")
    q = _as_rates(q, m, "q")
    if (p[1:m] <= 0).any():
        raise ValueError("every interior state needs p > 0")
    steps = np.ones(m)
    for j in range(1, m):
        steps[j] = steps[j - 1] * q[j] / p[j]
    if not np.isfinite(steps).all():
        # rescale by the largest increment in log space
        logs = np.concatenate([[0.0], np.cumsum(np.log(q[1:m]) - np.log(p[1:m]))])
        steps = np.exp(logs - logs.max())
    h = np.zeros(m + 1)
    h[1:] = np.cumsum(steps) / steps.sum()
    h[m] = 1.0
    return h


def solve_expected_time(m: int, p, q, reflecting0: bool = True) -> np.ndarray:
    """Expected steps to reach ``S_m`` for per-state rates.

    With ``reflecting0`` the chain moves from ``S_0`` to ``S_1`` in one step
    and the gaps ``d_j = mu_j - mu_{j+1}`` satisfy ``d_0 = 1`` and
    ``p_j d_j = 1 + q_j d_{j-1}``, summed from the top. Otherwise ``S_0`` is
    absorbing and the result is the expected time to absorption at either
    end, from a banded linear solve.
    """
    p = _as_rates(p, m, "p")
    q = _as_rates(q, m, "q")
    mu = np.zeros(m + 1)
    if reflecting0:
        if (p[1:m] <= 0).any():
            raise ValueError("every interior state needs p > 0")
        gaps = np.ones(m)
        for j in range(1, m):
            gaps[j] = (1 + q[j] * gaps[j - 1]) / p[j]
        mu[:m] = np.cumsum(gaps[::-1])[::-1]
    elif m > 1:
        k = m - 1
        ab = np.zeros((3, k))
        ab[0, 1:] = -p[1:m - 1]
        ab[1] = p[1:m] + q[1:m]
        ab[2, :-1] = -q[2:m]
        mu[1:m] = solve_banded((1, 1), ab, np.ones(k))
    return mu


# ---------------------------------------------------------------- simulation

class BDRun(NamedTuple):
    absorbed_at: int | None
    steps: int


def simulate_bd(spec: BirthDeathSpec, i: int, rng: np.random.Generator, max_steps: int) -> BDRun:
    """One trajectory from ``S_i`` until an absorbing end or ``max_steps``.

    A reflecting end moves inward with probability 1 and consumes no random
    draw, matching the compiled estimators.
    """
    i = spec._check_index(i)
    m, p, q = spec.m, spec.p, spec.q
    stop0 = spec.barrier0 == ABSORBING
    stopM = spec.barrierM == ABSORBING
    steps = 0
    while True:
        if (i == 0 and stop0) or (i == m and stopM):
            return BDRun(i, steps)
        if steps >= max_steps:
            return BDRun(None, steps)
        if i == 0:
            i = 1
        elif i == m:
            i = m - 1
        else:
            u = rng.random()
            if u < p:
                i += 1
            elif u < p + q:
                i -= 1
        steps += 1


class MCEstimate(NamedTuple):
    mean: float
    se: float
    trials: int
    method: str


def mc_absorption(spec: BirthDeathSpec, i: int, trials: int, rng: np.random.Generator,
                  max_steps: int = 10**9) -> MCEstimate:
    """Monte Carlo frequency of reaching ``S_m`` before ``S_0``.

    ``se`` is the sample binomial standard error.
    """
    i = spec._check_index(i)
    hits, _, undecided, _ = _kernels.bd_absorption_trials(spec.m, spec.p, spec.q, i, trials, rng,
                                                          max_steps)
    if undecided:
        raise RuntimeError(f"{undecided} trials undecided after {max_steps} steps")
    f = hits / trials
    return MCEstimate(f, math.sqrt(f * (1 - f) / trials), trials, "simulate")


def sample_reflecting_times(spec: BirthDeathSpec, i: int, size: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Exact samples of the reflecting hitting time of ``S_m`` from edge
    crossing counts, without stepping through the chain.

    Every departure from an interior level is up with probability
    ``a = p/(p+q)``. Going down from the top, the number of down-jumps from
    level ``j`` given ``U_j`` up-jumps is negative binomial ``(U_j, a)``,
    and ``U_{j-1}`` is that count plus one when ``j-1 >= i``. Each departure
    from an interior level costs a geometric``(p+q)`` number of steps; a
    departure from ``S_0`` costs one step. Cost grows with ``m`` and not with
    the (possibly astronomically large) hitting time.
    """
    i = spec._check_index(i)
    m, p, q = spec.m, spec.p, spec.q
    if p <= 0:
        raise ValueError("S_m is unreachable with p = 0")
    total = np.zeros(size, dtype=np.int64)
    if i == m:
        return total
    a = p / (p + q)
    up = np.ones(size, dtype=np.int64)  # U_{m-1}
    for j in range(m - 1, 0, -1):
        down = _negbin(up, a, rng)
        departures = up + down
        total += departures + _negbin(departures, p + q, rng)
        up = down + (1 if j - 1 >= i else 0)
    total += up  # departures from S_0, one step each
    return total


def _negbin(n: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Failures before ``n`` successes, elementwise, allowing ``n == 0``."""
    out = np.zeros_like(n)
    if prob >= 1:
        return out
    live = n > 0
    if live.any():
        out[live] = rng.negative_binomial(n[live], prob)
    return out


def mc_expected_time(spec: BirthDeathSpec, i: int, trials: int, rng: np.random.Generator,
                     method: str = "auto", step_budget: float = 2e8) -> MCEstimate:
    """Monte Carlo mean of the reflecting hitting time of ``S_m``.

    ``method`` is ``"simulate"`` (step the chain), ``"crossings"``
    (:func:`sample_reflecting_times`) or ``"auto"``, which steps the chain
    when the expected total work ``trials * mu_i`` fits ``step_budget``.
    """
    i = spec._check_index(i)
    if method == "auto":
        mu = solve_expected_time(spec.m, spec.p, spec.q)[i]
        method = "simulate" if mu * trials <= step_budget else "crossings"
    if method == "simulate":
        cap = np.iinfo(np.int64).max
        times = _kernels.bd_reflecting_times(spec.m, spec.p, spec.q, i, trials, rng, cap)
    elif method == "crossings":
        times = sample_reflecting_times(spec, i, trials, rng)
    else:
        raise ValueError(f"unknown method {method!r}")
    x = times.astype(float)
    return MCEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(trials)), trials, method)


def harmonic_residual(spec: BirthDeathSpec, values: Sequence[float]) -> float:
    """Largest relative residual of ``(p+q) h_i = p h_{i+1} + q h_{i-1}``."""
    p, q = spec.p, spec.q
    worst = 0.0
    for k in range(1, spec.m):
        lhs = (p + q) * values[k]
        rhs = p * values[k + 1] + q * values[k - 1]
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return worst


def time_residual(spec: BirthDeathSpec, values: Sequence[float]) -> float:
    """Largest relative residual of the reflecting hitting-time equations."""
    p, q = spec.p, spec.q
    worst = abs(values[0] - (1 + values[1])) / max(abs(values[0]), 1e-300)
    for k in range(1, spec.m):
        lhs = values[k]
        rhs = 1 + p * values[k + 1] + q * values[k - 1] + (1 - p - q) * values[k]
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return worst

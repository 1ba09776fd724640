"""Exact oracles and analytical bounds.

The enumeration oracles work in rational arithmetic over every opponent bid
profile and every tie-break outcome, independently of the float kernels
used by the simulator. Bids and values are grid numerators (``k`` for
``k/H``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .grid import ConfigurationError, ValueGrid
from .mechanisms import Mechanism, MechanismKind

ORACLE_MAX_N = 4
ORACLE_MAX_H = 16


class PreconditionError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _guard(n: int, H: int):
    if n < 2:
        raise ConfigurationError("need at least two bidders")
    if n > ORACLE_MAX_N or H > ORACLE_MAX_H:
        raise ConfigurationError(f"enumeration limited to n <= {ORACLE_MAX_N}, H <= {ORACLE_MAX_H}")


def _check_point(k: int, H: int, what: str):
    if not 1 <= k <= H:
        raise ConfigurationError(f"{what}={k} is not a grid numerator in 1..{H}")


# --- exact per-profile utilities ---------------------------------------------

def utility_outcomes(mech: Mechanism, opponents, v: int, b: int, H: int) -> list:
    """All tie-break outcomes for a bidder bidding ``b`` with value ``v``.

    Returns ``[(probability, utility), ...]`` with Fractions. Ties are broken
    uniformly: the bidder's rank among equal bids is uniform.
    """
    opponents = sorted(opponents, reverse=True)
    above = sum(1 for o in opponents if o > b)
    tied = sum(1 for o in opponents if o == b)
    share = Fraction(1, tied + 1)
    val = Fraction(v, H)
    out = []
    if mech.kind == MechanismKind.VCG:
        diffs = mech.exact_diffs()
        k = len(diffs)
        for rank in range(tied + 1):
            pos = above + rank + 1
            # the full ordering with the bidder placed at ``pos``
            ladder = opponents[:pos - 1] + [b] + opponents[pos - 1:]
            u = Fraction(0)
            if pos <= k:
                for j in range(pos, k + 1):
                    u += diffs[j - 1] * (val - Fraction(ladder[j], H))
            out.append((share, u))
        return out
    for rank in range(tied + 1):
        wins = above == 0 and rank == 0
        if not wins:
            out.append((share, Fraction(0)))
        elif mech.kind == MechanismKind.SPA:
            out.append((share, val - Fraction(opponents[0], H)))
        else:
            out.append((share, val - Fraction(b, H)))
    return out


def expected_utility(mech: Mechanism, opponents, v: int, b: int, H: int) -> Fraction:
    return sum((p * u for p, u in utility_outcomes(mech, opponents, v, b, H)), Fraction(0))


def exact_rewards(mech: Mechanism, opponents, v: int, H: int) -> list:
    """Tie-expected utility for every bid 1..H, as Fractions."""
    return [expected_utility(mech, opponents, v, b, H) for b in range(1, H + 1)]


def opponent_profiles(n: int, H: int):
    return itertools.product(range(1, H + 1), repeat=n - 1)


def exact_expected_utility_uniform(mech: Mechanism, n: int, H: int, v: int, b: int) -> Fraction:
    """Expected utility against ``n-1`` opponents bidding uniformly on the grid."""
    _guard(n, H)
    _check_point(v, H, "v")
    _check_point(b, H, "b")
    mech.validate(n)
    total = sum((expected_utility(mech, prof, v, b, H) for prof in opponent_profiles(n, H)), Fraction(0))
    return total / H ** (n - 1)


def fpa_closed_form(H: int, v: int, b: int) -> Fraction:
    """(v - b)(b - 1/(2H)) for two bidders against a uniform opponent."""
    return (Fraction(v, H) - Fraction(b, H)) * (Fraction(b, H) - Fraction(1, 2 * H))


def expected_utility_table(mech: Mechanism, n: int, H: int) -> np.ndarray:
    """(H, H) table of exact expected utilities, rows = value, cols = bid."""
    _guard(n, H)
    mech.validate(n)
    acc = [[Fraction(0)] * H for _ in range(H)]
    for prof in opponent_profiles(n, H):
        for v in range(1, H + 1):
            for b in range(1, H + 1):
                acc[v - 1][b - 1] += expected_utility(mech, prof, v, b, H)
    scale = H ** (n - 1)
    return np.array([[x / scale for x in row] for row in acc], dtype=object)


@dataclass
class GapCheck:
    H: int
    min_gap: Fraction
    bound: Fraction
    argmin: tuple

    @property
    def holds(self) -> bool:
        return self.min_gap >= self.bound


def fpa_bne_gap(H: int) -> GapCheck:
    """Smallest expected-utility edge of the discretized half-value bid over
    any other bid, two bidders, uniform opponent; compared to 1/(2H^2)."""
    if H % 2:
        raise ConfigurationError(f"H must be even (H={H})")
    ref = reference_strategy(Mechanism.first_price(), ValueGrid(H))
    best = None
    for v in range(1, H + 1):
        r = ref.bids(v)[0]
        ur = fpa_closed_form(H, v, r)
        for b in range(1, H + 1):
            if b == r:
                continue
            gap = ur - exact_expected_utility_uniform(Mechanism.first_price(), 2, H, v, b)
            if best is None or gap < best[0]:
                best = (gap, (v, b))
    return GapCheck(H, best[0], Fraction(1, 2 * H * H), best[1])


@dataclass
class AdvantageCheck:
    probability: Fraction
    bound: Fraction
    threshold: Fraction

    @property
    def holds(self) -> bool:
        return self.probability >= self.bound


def truthful_advantage_probability(n: int, H: int, v: int, b: int, mech: Mechanism | None = None) -> AdvantageCheck:
    """Exact P[u(truthful) - u(b) >= rho/H] under uniform exploration bids.

    Opponents bid uniformly; the two counterfactual auctions break ties
    independently. The comparison bound is tau/n with tau = 1/H^(n-1).
    """
    mech = mech or Mechanism.second_price()
    _guard(n, H)
    _check_point(v, H, "v")
    _check_point(b, H, "b")
    if b == v:
        raise ConfigurationError("b must differ from v")
    if mech.kind == MechanismKind.FPA:
        raise ConfigurationError("advantage check applies to truthful mechanisms only")
    mech.validate(n)
    rho = min(mech.exact_diffs()) if mech.kind == MechanismKind.VCG else Fraction(1)
    thr = rho / H
    hit = Fraction(0)
    for prof in opponent_profiles(n, H):
        truth = utility_outcomes(mech, prof, v, v, H)
        dev = utility_outcomes(mech, prof, v, b, H)
        for pt, ut in truth:
            for pd, ud in dev:
                if ut - ud >= thr:
                    hit += pt * pd
    prob = hit / H ** (n - 1)
    return AdvantageCheck(prob, Fraction(1, n * H ** (n - 1)), thr)


@dataclass
class DominanceReport:
    profiles: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def truthful_dominance(mech: Mechanism, n: int, H: int) -> DominanceReport:
    """Check exhaustively that bidding one's value is a weakly dominant bid."""
    _guard(n, H)
    mech.validate(n)
    rep = DominanceReport(0)
    for prof in opponent_profiles(n, H):
        for v in range(1, H + 1):
            rewards = exact_rewards(mech, prof, v, H)
            rep.profiles += 1
            for b in range(1, H + 1):
                if rewards[b - 1] > rewards[v - 1]:
                    rep.violations.append((prof, v, b))
    return rep


# --- analytical bounds -------------------------------------------------------

def _exp_term(n, H, tau, rho, T0):
    return math.exp(-(tau ** 2) * (rho ** 2) * T0 / (32 * n * n * H * H))


def t0_threshold(n: int, H: int, tau: float, rho: float = 1.0) -> tuple:
    """Minimal exploration length and the matching cap on gamma.

    Returns ``(T0, gamma_cap)`` where T0 is the least integer with
    exp(-tau^2 rho^2 T0 / (32 n^2 H^2)) <= 1/2 and gamma_cap = tau*rho/(8nH).
    """
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    if tau > 1.0 / H ** (n - 1) * (1 + 1e-12):
        raise ConfigurationError(f"tau must not exceed 1/H^(n-1) = {1.0 / H ** (n - 1):g}")
    if not 0 < rho <= 1:
        raise ConfigurationError("rho must lie in (0, 1]")
    T0 = math.ceil(32 * n * n * H * H * math.log(2) / (tau * tau * rho * rho))
    while _exp_term(n, H, tau, rho, T0) > 0.5:
        T0 += 1
    while T0 > 1 and _exp_term(n, H, tau, rho, T0 - 1) <= 0.5:
        T0 -= 1
    return T0, tau * rho / (8 * n * H)


@dataclass
class BoundResult:
    value: float
    raw: float
    vacuous: bool
    violations: list = field(default_factory=list)


THEOREMS = ("spa", "fpa", "vcg")


def convergence_probability(theorem: str, t: int, gamma: float, T0: int, n: int, H: int,
                            tau: float = None, rho: float = 1.0, strict: bool = True) -> BoundResult:
    """Lower bound on the probability of bidding the equilibrium bid at ``t``.

    ``gamma`` is gamma_t. Negative raw values are clamped to 0 and flagged
    vacuous. With ``strict`` a failed precondition raises
    :class:`PreconditionError`; otherwise it is listed in ``violations``.
    """
    theorem = theorem.lower()
    if theorem not in THEOREMS:
        raise ConfigurationError(f"unknown theorem {theorem!r}")
    bad = []
    if not t > T0:
        bad.append(f"t > T0 (t={t}, T0={T0})")
    if theorem == "fpa":
        if n != 2:
            bad.append(f"two bidders (n={n})")
        if H % 2:
            bad.append(f"H even (H={H})")
        if gamma > 1.0 / (4 * H ** 3):
            bad.append(f"gamma_t <= 1/(4H^3) = {1.0 / (4 * H ** 3):g} (gamma={gamma:g})")
        e = math.exp(-(H - 1) * T0 / (32 * (4 * H ** 3 + 1) * H ** 4))
        episodes = math.log(t) / math.log((4 * H ** 3 + H) / (4 * H ** 3 + 1)) if t > 1 else 0.0
        raw = 1 - H * gamma - e * episodes
    else:
        r = rho if theorem == "vcg" else 1.0
        if tau is None or tau <= 0:
            bad.append("tau > 0")
            tau = tau or 0.0
        elif tau > 1.0 / H ** (n - 1) * (1 + 1e-12):
            bad.append(f"tau <= 1/H^(n-1) (tau={tau:g})")
        if theorem == "vcg" and not 0 < rho <= 1:
            bad.append(f"rho in (0, 1] (rho={rho:g})")
        e = _exp_term(n, H, tau, r, T0)
        if e > 0.5:
            bad.append(f"exp(-tau^2 rho^2 T0/(32 n^2 H^2)) <= 1/2 (got {e:.6g})")
        cap = tau * r / (8 * n * H)
        if gamma > cap:
            bad.append(f"gamma_t <= tau*rho/(8nH) = {cap:g} (gamma={gamma:g})")
        raw = 1 - H * gamma - 4 * e
    if bad and strict:
        raise PreconditionError(bad)
    return BoundResult(min(1.0, max(0.0, raw)), raw, raw <= 0.0, bad)


@dataclass
class EpisodeSchedule:
    kind: str
    boundaries: list
    truncated: bool = False
    horizon: int = 0

    @property
    def ratios(self) -> list:
        b = self.boundaries
        return [b[j] / b[j - 1] for j in range(1, len(b))]


def _largest_satisfying(cond: Callable[[int], bool], lo: int, cap: int) -> int:
    """Largest T in (lo, cap] with cond(T), for cond true on an initial segment."""
    if lo + 1 > cap or not cond(lo + 1):
        return lo
    good, step = lo + 1, 1
    while True:
        probe = good + step
        if probe > cap or not cond(probe):
            break
        good = probe
        step *= 2
    hi = min(good + step, cap + 1)
    while hi - good > 1:
        mid = (good + hi) // 2
        if cond(mid):
            good = mid
        else:
            hi = mid
    return good


def episode_schedule(kind: str, T0: int, gamma: Callable[[int], float], n: int, H: int, tau: float,
                     horizon: int, rho: float = 1.0, max_levels: int = 10_000) -> EpisodeSchedule:
    """Geometric partition T0 < T1 < ... of the rounds after exploration.

    Each T_k is the last round whose mean-based slack still fits the budget
    earned by T_{k-1}: ``gamma_T * T <= tau*rho*T_{k-1}/(4nH)`` for SPA/VCG,
    ``(gamma_T + 1) * T <= (1/(4H^2) + 1) * T_{k-1}`` for FPA. The schedule
    stops at ``horizon`` and is flagged truncated if a level cannot grow.
    """
    kind = kind.lower()
    if kind not in THEOREMS:
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    if T0 < 1:
        raise ConfigurationError("T0 >= 1 required")
    slack = 1 + 1e-12
    if kind == "fpa":
        cap = 1.0 / (4 * H ** 3)
        probes = np.unique(np.geomspace(T0, max(horizon, T0 + 1), 200).astype(np.int64))
        worst = max(gamma(int(p)) for p in probes)
        if worst > cap * slack:
            raise ConfigurationError(f"first-price schedule needs gamma_t <= 1/(4H^3) = {cap:g} (saw {worst:g})")

        def make_cond(prev):
            budget = (1.0 / (4 * H * H) + 1.0) * prev
            return lambda T: (gamma(T) + 1.0) * T <= budget * slack
    else:
        r = rho if kind == "vcg" else 1.0

        def make_cond(prev):
            budget = tau * r * prev / (4 * n * H)
            return lambda T: gamma(T) * T <= budget * slack

    bounds = [int(T0)]
    truncated = False
    while len(bounds) <= max_levels and bounds[-1] < horizon:
        prev = bounds[-1]
        nxt = _largest_satisfying(make_cond(prev), prev, horizon)
        if nxt <= prev:
            truncated = True
            break
        bounds.append(nxt)
    return EpisodeSchedule(kind, bounds, truncated, horizon)


# --- equilibrium reference ---------------------------------------------------

@dataclass(frozen=True)
class ReferenceStrategy:
    """Equilibrium bid set per value; ``table[v-1, b-1]`` marks membership."""

    kind: MechanismKind
    H: int
    table: np.ndarray

    def bids(self, v: int) -> list:
        return [int(b) + 1 for b in np.flatnonzero(self.table[v - 1])]

    def contains(self, v: int, b: int) -> bool:
        return bool(self.table[v - 1, b - 1])


def reference_strategy(mech: Mechanism, grid: ValueGrid) -> ReferenceStrategy:
    """Truthful bids for SPA/VCG; the grid point in [v/2, v/2 + 1/H) for FPA."""
    H = grid.H
    table = np.zeros((H, H), dtype=np.bool_)
    if mech.kind == MechanismKind.FPA:
        if H % 2:
            raise ConfigurationError(f"first-price reference needs even H (H={H})")
        for v in range(1, H + 1):
            for b in range(1, H + 1):
                # v/2 <= b/H < v/2 + 1/H in numerator units
                table[v - 1, b - 1] = v <= 2 * b < v + 2
    else:
        np.fill_diagonal(table, True)
    return ReferenceStrategy(mech.kind, H, table)

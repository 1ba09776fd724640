"""Discretized value/bid space, value priors and opponent order statistics.

Grid points are handled as integer numerators ``k`` meaning ``k/H`` with
``1 <= k <= H``. Floats only appear at the boundary (utilities, reporting).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised when inputs violate a structural precondition."""


@dataclass(frozen=True)
class ValueGrid:
    H: int

    def __post_init__(self):
        if not isinstance(self.H, (int, np.integer)) or self.H < 2:
            raise ConfigurationError(f"invalid resolution H={self.H!r}: need integer H >= 2")

    @property
    def numerators(self) -> np.ndarray:
        return np.arange(1, self.H + 1, dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        return self.numerators / self.H

    def fractions(self) -> list[Fraction]:
        return [Fraction(k, self.H) for k in range(1, self.H + 1)]

    def __len__(self):
        return self.H

    def __contains__(self, k) -> bool:
        return isinstance(k, (int, np.integer)) and 1 <= k <= self.H

    def numerator(self, x) -> int:
        """Map a grid value (float or Fraction) to its numerator, exactly."""
        if isinstance(x, Fraction):
            k = x * self.H
            if k.denominator != 1:
                raise ConfigurationError(f"{x} is not on the 1/{self.H} grid")
            k = int(k)
        else:
            k = int(round(float(x) * self.H))
            if abs(k - float(x) * self.H) > 1e-9:
                raise ConfigurationError(f"{x} is not on the 1/{self.H} grid")
        if not 1 <= k <= self.H:
            raise ConfigurationError(f"{x} is outside (0, 1]")
        return k

    def check(self, ks) -> np.ndarray:
        ks = np.asarray(ks)
        if ks.size and (ks.min() < 1 or ks.max() > self.H):
            raise ConfigurationError(f"value outside grid 1..{self.H}: {ks}")
        return ks


def make_grid(H: int) -> ValueGrid:
    return ValueGrid(H)


@dataclass(frozen=True, eq=False)
class ValueDistribution:
    """Prior over grid points. ``exact`` holds rational masses when known."""

    grid: ValueGrid
    pmf: np.ndarray
    exact: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=np.float64)
        if pmf.shape != (self.grid.H,):
            raise ConfigurationError(f"pmf has {pmf.size} entries, grid has {self.grid.H}")
        if (pmf < 0).any() or abs(pmf.sum() - 1.0) > 1e-12:
            raise ConfigurationError("pmf must be nonnegative and sum to 1 within 1e-12")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def uniform(cls, grid: ValueGrid) -> "ValueDistribution":
        exact = tuple(Fraction(1, grid.H) for _ in range(grid.H))
        return cls(grid, np.full(grid.H, 1.0 / grid.H), exact)

    @classmethod
    def from_pmf(cls, grid: ValueGrid, pmf: Sequence) -> "ValueDistribution":
        if all(isinstance(p, (int, Fraction)) for p in pmf):
            exact = tuple(Fraction(p) for p in pmf)
            if sum(exact) != 1:
                raise ConfigurationError("rational pmf must sum to exactly 1")
            return cls(grid, np.array([float(p) for p in exact]), exact)
        return cls(grid, np.asarray(pmf, dtype=np.float64))

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.pmf == 1.0 / self.grid.H))

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-cdf sampling; returns numerators."""
        u = rng.random(size)
        return np.searchsorted(self.cdf, u, side="right") + 1


@dataclass(frozen=True)
class OpponentStatistics:
    bidder: int
    order: int
    kth_pmf: np.ndarray
    kth_cdf: np.ndarray
    max_pmf: np.ndarray
    max_cdf: np.ndarray
    tau: float
    exact_kth_pmf: tuple | None = None
    exact_max_pmf: tuple | None = None


def _kth_largest_cdf(masses, H: int, k: int, one):
    """P(k-th largest of independent opponents <= x) for each grid x.

    ``masses`` is a list of per-opponent pmf sequences (floats or Fractions).
    The event is "fewer than k opponents exceed x", evaluated with a
    Poisson-binomial DP over opponents.
    """
    out = []
    for x in range(1, H + 1):
        dist = [one] + [one * 0] * len(masses)
        for pmf in masses:
            above = sum(pmf[x:], one * 0)
            below = one - above
            nxt = [one * 0] * len(dist)
            for c, p in enumerate(dist):
                if not p:
                    continue
                nxt[c] += p * below
                if c + 1 < len(dist):
                    nxt[c + 1] += p * above
            dist = nxt
        out.append(sum(dist[:k], one * 0))
    return out


def _pmf_from_cdf(cdf):
    return [cdf[0]] + [cdf[j] - cdf[j - 1] for j in range(1, len(cdf))]


def opponent_stats(dists: Sequence[ValueDistribution], i: int, k: int = 1) -> OpponentStatistics:
    """Order statistics of the opponents' values as seen by bidder ``i``.

    ``k=1`` is the opponent maximum; ``k`` runs up to ``n-1``. Uses rational
    arithmetic when every prior carries exact masses.
    """
    n = len(dists)
    if n < 2:
        raise ConfigurationError("need at least two bidders")
    if not 0 <= i < n:
        raise ConfigurationError(f"bidder index {i} out of range")
    if not 1 <= k <= n - 1:
        raise ConfigurationError(f"order index k={k} must be in 1..{n - 1}")
    grid = dists[0].grid
    if any(d.grid != grid for d in dists):
        raise ConfigurationError("all distributions must share one grid")
    H = grid.H
    others = [d for j, d in enumerate(dists) if j != i]
    exact = all(d.exact is not None for d in others)

    def compute(order):
        if exact:
            cdf = _kth_largest_cdf([d.exact for d in others], H, order, Fraction(1))
            pmf = _pmf_from_cdf(cdf)
            return tuple(pmf), np.array([float(p) for p in pmf]), np.array([float(c) for c in cdf])
        cdf = _kth_largest_cdf([list(d.pmf) for d in others], H, order, 1.0)
        pmf = np.array(_pmf_from_cdf(cdf))
        return None, pmf, np.array(cdf)

    ex_k, pmf_k, cdf_k = compute(k)
    ex_1, pmf_1, cdf_1 = (ex_k, pmf_k, cdf_k) if k == 1 else compute(1)
    if exact:
        tau = float(min(min(ex_k), Fraction(1, H ** (n - 1))))
    else:
        tau = min(float(pmf_k.min()), 1.0 / H ** (n - 1))
    return OpponentStatistics(i, k, pmf_k, cdf_k, pmf_1, cdf_1, tau, ex_k, ex_1)


def thickness(dists: Sequence[ValueDistribution], k: int = 1) -> float:
    """Clamped thickness constant: min over bidders of the k-th order pmf."""
    return min(opponent_stats(dists, i, k).tau for i in range(len(dists)))

"""One-shot auction rules: second-price, first-price and multi-position VCG."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .grid import ConfigurationError, ValueGrid


class MechanismKind(enum.IntEnum):
    SPA = kernels.SPA
    FPA = kernels.FPA
    VCG = kernels.VCG

    @classmethod
    def parse(cls, name: str) -> "MechanismKind":
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "spa": cls.SPA, "second_price": cls.SPA, "secondprice": cls.SPA,
            "fpa": cls.FPA, "first_price": cls.FPA, "firstprice": cls.FPA,
            "vcg": cls.VCG, "multi_position_vcg": cls.VCG, "multipositionvcg": cls.VCG,
        }
        if key not in aliases:
            raise ConfigurationError(f"unknown mechanism kind {name!r}")
        return aliases[key]


@dataclass(frozen=True)
class Mechanism:
    kind: MechanismKind
    multipliers: tuple = (1.0,)

    def __post_init__(self):
        kind = MechanismKind(self.kind)
        object.__setattr__(self, "kind", kind)
        mult = tuple(float(p) for p in self.multipliers) if kind == MechanismKind.VCG else (1.0,)
        if kind == MechanismKind.VCG:
            if not mult:
                raise ConfigurationError("VCG needs at least one position multiplier")
            if any(p <= 0 for p in mult):
                raise ConfigurationError("VCG multipliers must be positive")
            if any(a < b for a, b in zip(mult, mult[1:])):
                raise ConfigurationError(f"VCG multipliers must be nonincreasing: {mult}")
        object.__setattr__(self, "multipliers", mult)

    @classmethod
    def second_price(cls) -> "Mechanism":
        return cls(MechanismKind.SPA)

    @classmethod
    def first_price(cls) -> "Mechanism":
        return cls(MechanismKind.FPA)

    @classmethod
    def vcg(cls, multipliers: Sequence[float]) -> "Mechanism":
        return cls(MechanismKind.VCG, tuple(multipliers))

    @property
    def slots(self) -> int:
        return len(self.multipliers)

    @property
    def diffs(self) -> np.ndarray:
        """``p_j - p_{j+1}`` for j = 1..k, with ``p_{k+1} = 0``."""
        p = np.array(self.multipliers + (0.0,))
        return p[:-1] - p[1:]

    @property
    def rho(self) -> float:
        return float(self.diffs.min())

    def exact_diffs(self) -> list[Fraction]:
        p = [Fraction(repr(x)) for x in self.multipliers] + [Fraction(0)]
        return [p[j] - p[j + 1] for j in range(len(p) - 1)]

    def validate(self, n: int):
        if n < 2:
            raise ConfigurationError("need at least two bidders")
        if self.kind == MechanismKind.VCG and n <= self.slots:
            raise ConfigurationError(f"VCG needs more bidders than slots (n={n}, k={self.slots})")


@dataclass
class AuctionOutcome:
    """Result of one round. Money amounts are in value units (fractions of 1)."""

    allocation: np.ndarray
    payments: np.ndarray
    utilities: np.ndarray
    order: np.ndarray
    tie_events: list = field(default_factory=list)

    @property
    def winners(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.allocation > 0)]


def _as_numerators(grid: ValueGrid, xs) -> np.ndarray:
    arr = np.asarray(xs)
    if np.issubdtype(arr.dtype, np.integer):
        return grid.check(arr).astype(np.int64)
    return np.array([grid.numerator(x) for x in xs], dtype=np.int64)


def run_auction(mech: Mechanism, bids, values, grid: ValueGrid, rng: np.random.Generator) -> AuctionOutcome:
    """Run one auction. ``bids``/``values`` are integer numerators or grid floats."""
    b = _as_numerators(grid, bids)
    v = _as_numerators(grid, values)
    n = b.size
    if v.size != n:
        raise ConfigurationError("bids and values must have one entry per bidder")
    mech.validate(n)
    keys = rng.random(n)
    order = np.empty(n, dtype=np.int64)
    alloc = np.empty(n)
    pay = np.empty(n)
    util = np.empty(n)
    kernels.settle(int(mech.kind), mech.diffs, mech.slots, b, v, keys, grid.H, order, alloc, pay, util)
    ties = []
    for level in np.unique(b):
        tied = np.flatnonzero(b == level)
        if tied.size > 1:
            ties.append({"bid": int(level), "bidders": [int(j) for j in tied]})
    return AuctionOutcome(alloc, pay, util, order, ties)


def counterfactual_rewards(mech: Mechanism, opponent_bids, value, grid: ValueGrid) -> np.ndarray:
    """Tie-expected utility of each bid ``k/H`` (index ``k-1``) given fixed opponents."""
    opp = _as_numerators(grid, opponent_bids)
    v = _as_numerators(grid, [value])[0]
    mech.validate(opp.size + 1)
    srt = np.sort(opp)[::-1].copy()
    m = int(srt[0])
    ties = int((srt == m).sum())
    out = np.empty(grid.H)
    kernels.reward_vector(int(mech.kind), mech.diffs, mech.slots, srt, m, ties, int(v), grid.H, out)
    return out

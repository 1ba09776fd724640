"""Contextual mean-based learners wrapped in an exploration-then-exploit loop.

A learner keeps one reward table per context (its private value). For the
first ``T0`` rounds it bids uniformly at random; afterwards the policy acts on
the accumulated rewards. The same kernel code drives both the standalone
:class:`LearnerState` and the batched simulation engine.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import ConfigurationError, ValueGrid
from .mechanisms import Mechanism


class FeedbackError(ValueError):
    pass


class Policy(enum.IntEnum):
    EPSILON_GREEDY = kernels.EPS_GREEDY
    MWU = kernels.MWU
    EXP3 = kernels.EXP3
    UCB1 = kernels.UCB1
    WORST_ARM = kernels.WORST_ARM


class Feedback(enum.IntEnum):
    BANDIT = kernels.BANDIT
    FULL_INFO = kernels.FULL_INFO
    CROSS_LEARNING = kernels.CROSS_LEARNING


_POLICY_NAMES = {
    "epsilon_greedy": Policy.EPSILON_GREEDY, "eps_greedy": Policy.EPSILON_GREEDY,
    "mwu": Policy.MWU, "hedge": Policy.MWU,
    "exp3": Policy.EXP3,
    "ucb1": Policy.UCB1, "ucb": Policy.UCB1,
    "worst_arm": Policy.WORST_ARM,
}
_FEEDBACK_NAMES = {
    "bandit": Feedback.BANDIT,
    "full_info": Feedback.FULL_INFO, "fullinfo": Feedback.FULL_INFO, "full": Feedback.FULL_INFO,
    "cross_learning": Feedback.CROSS_LEARNING, "crosslearning": Feedback.CROSS_LEARNING,
    "cross": Feedback.CROSS_LEARNING,
}


# --- probability-bound schedules -------------------------------------------

class GammaSchedule:
    """A map t -> gamma_t bounding how often dominated bids may be played."""

    name = "gamma"

    def __call__(self, t):
        raise NotImplementedError

    def values(self, ts) -> np.ndarray:
        return np.array([self(int(t)) for t in ts], dtype=np.float64)

    def mean_based_issues(self, horizon: int, probes: int = 200) -> list[str]:
        """Check ``gamma_t * t`` nondecreasing and gamma_t shrinking on a log grid."""
        ts = np.unique(np.geomspace(1, max(horizon, 2), probes).astype(np.int64))
        g = self.values(ts)
        issues = []
        gt = g * ts
        if np.any(np.diff(gt) < -1e-12 * np.abs(gt[1:])):
            issues.append("gamma_t * t decreases somewhere on the probe grid")
        if not g[-1] < g[0]:
            issues.append("gamma_t does not decay over the horizon")
        elif g[-1] > 0 and g[-1] == g[-2]:
            issues.append(f"gamma_t plateaus at {g[-1]:g} instead of vanishing")
        return issues


@dataclass(frozen=True)
class ConstantGamma(GammaSchedule):
    gamma: float
    name = "constant"

    def __call__(self, t):
        return self.gamma


@dataclass(frozen=True)
class PowerGamma(GammaSchedule):
    """gamma_t = min(1, g0 * t**-power); mean-based for 0 < power < 1."""

    g0: float
    power: float = 0.5
    name = "power"

    def __call__(self, t):
        return min(1.0, self.g0 * max(t, 1) ** (-self.power))


@dataclass(frozen=True)
class LinearAnneal(GammaSchedule):
    """Linear decay from ``start`` to ``end`` over ``rounds`` rounds, then flat."""

    start: float = 1.0
    end: float = 0.05
    rounds: int = 500_000
    name = "linear"

    def __call__(self, t):
        if self.rounds <= 0:
            return self.end
        frac = min(1.0, t / self.rounds)
        return self.start + (self.end - self.start) * frac


def parse_gamma(spec: dict) -> GammaSchedule:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return ConstantGamma(float(spec["gamma"]))
    if kind == "power":
        return PowerGamma(float(spec["g0"]), float(spec.get("power", 0.5)))
    if kind in ("linear", "anneal", "epsilon"):
        return LinearAnneal(float(spec.get("start", 1.0)), float(spec.get("end", 0.05)),
                            int(spec.get("rounds", 500_000)))
    raise ConfigurationError(f"unknown gamma schedule kind {kind!r}")


# --- learner specification ---------------------------------------------------

@dataclass(frozen=True)
class LearnerSpec:
    policy: Policy = Policy.EPSILON_GREEDY
    feedback: Feedback = Feedback.BANDIT
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_rounds: int = 500_000
    eta: float = 1.0
    target_g0: float = 0.0
    target_power: float = 0.5
    mixing: float = 0.05
    ucb_c: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        d = dict(d)
        kw = {}
        if "policy" in d:
            name = str(d.pop("policy")).lower()
            if name not in _POLICY_NAMES:
                raise ConfigurationError(f"unknown policy {name!r}")
            kw["policy"] = _POLICY_NAMES[name]
        if "feedback" in d:
            name = str(d.pop("feedback")).lower()
            if name not in _FEEDBACK_NAMES:
                raise ConfigurationError(f"unknown feedback mode {name!r}")
            kw["feedback"] = _FEEDBACK_NAMES[name]
        known = {f for f in cls.__dataclass_fields__} - {"policy", "feedback"}
        for key, val in d.items():
            if key not in known:
                raise ConfigurationError(f"unknown learner parameter {key!r}")
            kw[key] = type(getattr(cls, key))(val)
        spec = cls(**kw)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            out[name] = val.name.lower() if isinstance(val, enum.Enum) else val
        return out

    def validate(self):
        if not (0.0 <= self.epsilon_start <= 1.0 and 0.0 <= self.epsilon_end <= 1.0):
            raise ConfigurationError("epsilon values must lie in [0, 1]")
        if not 0.0 <= self.mixing <= 1.0:
            raise ConfigurationError("Exp3 mixing must lie in [0, 1]")
        if self.eta < 0:
            raise ConfigurationError("eta must be nonnegative")

    def param_row(self) -> np.ndarray:
        row = np.zeros(kernels.N_PARAMS)
        row[kernels.P_EPS0] = self.epsilon_start
        row[kernels.P_EPS1] = self.epsilon_end
        row[kernels.P_EPS_LEN] = self.anneal_rounds
        row[kernels.P_ETA] = self.eta
        row[kernels.P_G0] = self.target_g0
        row[kernels.P_GPOW] = self.target_power
        row[kernels.P_MIX] = self.mixing
        row[kernels.P_UCB_C] = self.ucb_c
        return row

    def epsilon_schedule(self) -> LinearAnneal:
        return LinearAnneal(self.epsilon_start, self.epsilon_end, self.anneal_rounds)


def learner_tables(n: int, H: int) -> dict:
    """Zeroed per-bidder tables, indexed [bidder, context-1, bid-1]."""
    return {
        "sigma": np.zeros((n, H, H)),
        "comp": np.zeros((n, H, H)),
        "updates": np.zeros((n, H, H), dtype=np.int64),
        "counts": np.zeros((n, H, H), dtype=np.int64),
        "occurrences": np.zeros((n, H), dtype=np.int64),
        "aux": np.zeros((n, H, H)),
    }


@dataclass
class Decision:
    bid: int
    probability: float
    distribution: np.ndarray
    estimates: np.ndarray


@dataclass
class LearnerState:
    """One bidder's learning state; bids and contexts are grid numerators."""

    grid: ValueGrid
    spec: LearnerSpec = field(default_factory=LearnerSpec)
    T0: int = 0
    mechanism: Mechanism = field(default_factory=Mechanism.second_price)
    t: int = 0

    def __post_init__(self):
        self._tables = learner_tables(1, self.grid.H)
        self._params = self.spec.param_row()
        H = self.grid.H
        self._scratch = [np.empty(H) for _ in range(3)]
        self._last_prob = {}

    @property
    def sigma(self) -> np.ndarray:
        return self._tables["sigma"][0]

    @property
    def counts(self) -> np.ndarray:
        return self._tables["counts"][0]

    @property
    def occurrences(self) -> np.ndarray:
        return self._tables["occurrences"][0]

    def estimated_sigma(self, value: int) -> np.ndarray:
        """Cumulative reward estimates the policy compares for context ``value``."""
        means, est, _ = self._scratch
        t = self._tables
        kernels.scores(0, value, self.grid.H, int(self.spec.policy), int(self.spec.feedback),
                       t["sigma"], t["updates"], t["occurrences"], t["aux"], self.t, means, est)
        return est.copy()

    def choose_bid(self, value: int, rng: np.random.Generator, greedy: bool = False) -> Decision:
        if value not in self.grid:
            raise ConfigurationError(f"value {value} not on grid")
        means, est, probs = self._scratch
        tb = self._tables
        u3 = rng.random(3)
        b, p = kernels.decide(0, int(value), self.t + 1, self.T0, self.grid.H, int(self.spec.policy),
                              self._params, int(self.spec.feedback), tb["sigma"], tb["updates"],
                              tb["occurrences"], tb["aux"], u3, greedy, means, est, probs, True)
        self._last_prob[(int(value), int(b))] = p
        return Decision(int(b), float(p), probs.copy(), est.copy())

    def update(self, value: int, bid: int, utility: float, opponent_bids=None, probability=None):
        """Feed back one round.

        Non-bandit modes need the opponents' bids (numerators) to build the
        counterfactual reward vector; bandit mode uses ``utility`` only.
        """
        H = self.grid.H
        fb = self.spec.feedback
        if fb != Feedback.BANDIT and opponent_bids is None:
            raise FeedbackError(f"{fb.name.lower()} feedback needs the opponents' bids")
        if opponent_bids is None:
            opp = np.zeros(1, dtype=np.int64)
            m, ties = 0, 0
        else:
            opp = np.sort(np.asarray(opponent_bids, dtype=np.int64))[::-1].copy()
            self.mechanism.validate(opp.size + 1)
            m, ties = int(opp[0]), int((opp == opp[0]).sum())
        if probability is None:
            probability = self._last_prob.get((int(value), int(bid)), 1.0 / H)
        tb = self._tables
        self.t += 1
        kernels.learn(0, int(value), int(bid), float(utility), float(probability), int(self.mechanism.kind),
                      self.mechanism.diffs, self.mechanism.slots, opp, m, ties, H, int(self.spec.policy),
                      int(fb), tb["sigma"], tb["comp"], tb["updates"], tb["counts"], tb["occurrences"],
                      tb["aux"], self._scratch[0])


# --- mean-based compliance -------------------------------------------------

@dataclass
class DecisionLog:
    """Exploitation-phase decisions: round, context, estimates, distribution."""

    t: np.ndarray
    context: np.ndarray
    estimates: np.ndarray
    distribution: np.ndarray
    bidder: np.ndarray | None = None

    def __len__(self):
        return self.t.size


@dataclass
class ComplianceReport:
    checked: int
    count: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.count == 0

    def merge(self, other: "ComplianceReport", max_report: int = 1000) -> "ComplianceReport":
        kept = (self.violations + other.violations)[:max_report]
        return ComplianceReport(self.checked + other.checked, self.count + other.count, kept)


def compliance_check(log: DecisionLog, schedule: GammaSchedule, max_report: int = 1000) -> ComplianceReport:
    """Find decisions where a trailing bid kept too much probability.

    A violation is a (t, context, bid) where the bid's cumulative estimate
    trails the best by more than ``gamma_s * s`` yet was played with
    probability above ``gamma_s``; ``s = t - 1`` is the number of completed
    rounds the estimates summarize.
    """
    if len(log) == 0:
        return ComplianceReport(0)
    s = log.t.astype(np.int64) - 1
    gam = schedule.values(s) if not isinstance(schedule, ConstantGamma) else np.full(s.size, schedule.gamma)
    est = log.estimates
    lag = est.max(axis=1, keepdims=True) - est
    bad = (lag > (gam * s)[:, None]) & (log.distribution > gam[:, None])
    rows, cols = np.nonzero(bad)
    out = []
    for r, c in zip(rows[:max_report], cols[:max_report]):
        out.append({
            "t": int(log.t[r]),
            "bidder": int(log.bidder[r]) if log.bidder is not None else 0,
            "context": int(log.context[r]),
            "bid": int(c + 1),
            "gap": float(lag[r, c]),
            "threshold": float(gam[r] * s[r]),
            "probability": float(log.distribution[r, c]),
            "gamma": float(gam[r]),
        })
    return ComplianceReport(len(log), int(rows.size), out)

"""Repeated-auction driver: samples values, queries learners, settles rounds
and logs trajectories. The per-round work happens in :mod:`bidlearn.kernels`.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._accel import backend_name
from .grid import ConfigurationError, ValueDistribution, ValueGrid
from .learners import DecisionLog, LearnerSpec, learner_tables
from .mechanisms import Mechanism, MechanismKind

CHUNK = 8192
LOG_SCHEMA = "bidlearn.trajectory/1"


@dataclass
class SimulationConfig:
    n: int
    grid: ValueGrid
    distributions: list
    mechanism: Mechanism
    learners: list
    T0: int
    horizon: int
    seed: int = 0
    logging_cadence: int = 0
    rollout_rounds: int = 0
    window: int = 1000
    fpa_theorem: bool = False

    def validate(self):
        if self.n < 2:
            raise ConfigurationError(f"n >= 2 violated (n={self.n})")
        if len(self.distributions) != self.n:
            raise ConfigurationError("one value distribution per bidder required")
        if len(self.learners) != self.n:
            raise ConfigurationError("one learner spec per bidder required")
        if any(d.grid != self.grid for d in self.distributions):
            raise ConfigurationError("all distributions must live on the configured grid")
        if self.T0 < 0:
            raise ConfigurationError("T0 >= 0 violated")
        # T == T0 is a pure-exploration run
        if self.horizon < self.T0 or self.horizon < 1:
            raise ConfigurationError(f"T >= T0 violated (T={self.horizon}, T0={self.T0})")
        if self.rollout_rounds < 0 or self.logging_cadence < 0:
            raise ConfigurationError("rollout_rounds and logging_cadence must be nonnegative")
        if self.window < 1:
            raise ConfigurationError("window >= 1 violated")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        self.mechanism.validate(self.n)
        for spec in self.learners:
            spec.validate()
        if self.fpa_theorem:
            if self.mechanism.kind != MechanismKind.FPA:
                raise ConfigurationError("first-price pipeline requires the FPA mechanism")
            if self.n != 2:
                raise ConfigurationError(f"first-price pipeline requires n == 2 (n={self.n})")
            if self.grid.H % 2:
                raise ConfigurationError(f"first-price pipeline requires even H (H={self.grid.H})")
            if not all(d.is_uniform for d in self.distributions):
                raise ConfigurationError("first-price pipeline requires uniform priors")
        return self

    def replace(self, **kw) -> "SimulationConfig":
        d = dict(self.__dict__)
        d.update(kw)
        return SimulationConfig(**d)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "H": self.grid.H,
            "distributions": [[float(p) for p in d.pmf] for d in self.distributions],
            "mechanism": {"kind": self.mechanism.kind.name.lower(), "multipliers": list(self.mechanism.multipliers)},
            "learners": [s.to_dict() for s in self.learners],
            "T0": self.T0,
            "horizon": self.horizon,
            "seed": int(self.seed),
            "logging_cadence": self.logging_cadence,
            "rollout_rounds": self.rollout_rounds,
            "window": self.window,
            "fpa_theorem": self.fpa_theorem,
        }

    @property
    def total_rounds(self) -> int:
        return self.horizon + self.rollout_rounds


def make_config(n=2, H=10, mechanism="spa", T0=10_000, horizon=600_000, seed=0, learner=None,
                multipliers=(1.0,), **kw) -> SimulationConfig:
    """Convenience constructor: uniform priors, one learner spec for everyone."""
    grid = ValueGrid(H)
    mech = mechanism if isinstance(mechanism, Mechanism) else Mechanism(MechanismKind.parse(mechanism), tuple(multipliers))
    spec = learner if isinstance(learner, LearnerSpec) else LearnerSpec.from_dict(learner or {})
    return SimulationConfig(n, grid, [ValueDistribution.uniform(grid)] * n, mech, [spec] * n,
                            T0, horizon, seed, **kw).validate()


@dataclass
class TrajectoryLog:
    """Columnar per-round record. Row ``r`` is round ``t = r + 1``.

    Values, bids and opponent maxima are grid numerators; allocation,
    payments and utilities are floats in value units.
    """

    config: SimulationConfig
    values: np.ndarray
    bids: np.ndarray
    opp_max: np.ndarray
    allocation: np.ndarray
    payments: np.ndarray
    utilities: np.ndarray
    snapshots: list = field(default_factory=list)
    online_agreement: np.ndarray | None = None
    online_decisions: np.ndarray | None = None
    tables: dict | None = None
    backend: str = ""

    def __len__(self):
        return self.values.shape[0]

    @property
    def rounds(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    def phases(self) -> np.ndarray:
        t = self.rounds
        out = np.full(t.size, "exploit", dtype=object)
        out[t <= self.config.T0] = "explore"
        out[t > self.config.horizon] = "rollout"
        return out

    def rollout_slice(self) -> slice:
        return slice(self.config.horizon, len(self))

    def training_slice(self) -> slice:
        return slice(0, self.config.horizon)

    def greedy_table(self) -> np.ndarray:
        """Most frequent rollout bid per (bidder, value); 0 where unobserved."""
        H = self.config.grid.H
        sl = self.rollout_slice()
        out = np.zeros((self.config.n, H), dtype=np.int64)
        for i in range(self.config.n):
            counts = np.zeros((H, H), dtype=np.int64)
            np.add.at(counts, (self.values[sl, i] - 1, self.bids[sl, i] - 1), 1)
            seen = counts.sum(axis=1) > 0
            out[i, seen] = counts[seen].argmax(axis=1) + 1
        return out

    # --- serialization ---------------------------------------------------

    def iter_jsonl(self):
        phases = self.phases()
        for r in range(len(self)):
            rec = {
                "t": r + 1,
                "phase": phases[r],
                "values": self.values[r].tolist(),
                "bids": self.bids[r].tolist(),
                "m": self.opp_max[r].tolist(),
                "allocation": self.allocation[r].tolist(),
                "payments": self.payments[r].tolist(),
                "utilities": self.utilities[r].tolist(),
            }
            yield json.dumps(rec, separators=(",", ":"))

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.iter_jsonl():
                fh.write(line)
                fh.write("\n")

    def write_sigma_csv(self, path):
        H = self.config.grid.H
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,bidder,value,bid,sigma\n")
            for t, sig in self.snapshots:
                for i in range(sig.shape[0]):
                    for c in range(H):
                        for b in range(H):
                            fh.write(f"{t},{i},{c + 1},{b + 1},{float(sig[i, c, b])!r}\n")

    @classmethod
    def read_jsonl(cls, path, config: SimulationConfig) -> "TrajectoryLog":
        vals, bids, ms, al, pa, ut = [], [], [], [], [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                vals.append(rec["values"])
                bids.append(rec["bids"])
                ms.append(rec["m"])
                al.append(rec["allocation"])
                pa.append(rec["payments"])
                ut.append(rec["utilities"])
        i64 = np.int64
        return cls(config, np.array(vals, dtype=i64), np.array(bids, dtype=i64), np.array(ms, dtype=i64),
                   np.array(al, dtype=float), np.array(pa, dtype=float), np.array(ut, dtype=float))


def reference_table(config: SimulationConfig) -> np.ndarray | None:
    from .analysis import reference_strategy

    if config.mechanism.kind == MechanismKind.FPA and (config.n != 2 or config.grid.H % 2):
        return None
    return reference_strategy(config.mechanism, config.grid).table


def _streams(seed: int, n: int):
    root = np.random.SeedSequence(int(seed))
    value_ss, tie_ss, policy_ss = root.spawn(3)
    return (np.random.Generator(np.random.PCG64(value_ss)),
            np.random.Generator(np.random.PCG64(tie_ss)),
            [np.random.Generator(np.random.PCG64(s)) for s in policy_ss.spawn(n)])


def run_simulation(config: SimulationConfig, monitor: Callable[[DecisionLog], None] | None = None) -> TrajectoryLog:
    """Play ``horizon`` learning rounds then ``rollout_rounds`` greedy rounds.

    ``monitor``, when given, receives the exploitation-phase decisions of each
    processed chunk (estimates plus full action distributions) and enables
    distribution recording in the kernel.
    """
    config.validate()
    n, H = config.n, config.grid.H
    T, total = config.horizon, config.total_rounds
    mech = config.mechanism
    rng_val, rng_tie, rng_pol = _streams(config.seed, n)
    tabs = learner_tables(n, H)
    cdf = np.stack([d.cdf for d in config.distributions])
    pols = np.array([int(s.policy) for s in config.learners], dtype=np.int64)
    fbs = np.array([int(s.feedback) for s in config.learners], dtype=np.int64)
    params = np.stack([s.param_row() for s in config.learners])
    ref = reference_table(config)
    ref_arr = ref if ref is not None else np.zeros((H, H), dtype=np.bool_)
    n_win = max(1, -(-(T - config.T0) // config.window))
    agree = np.zeros(n_win, dtype=np.int64)
    decisions = np.zeros(n_win, dtype=np.int64)

    out_val = np.empty((total, n), dtype=np.int64)
    out_bid = np.empty((total, n), dtype=np.int64)
    out_m = np.empty((total, n), dtype=np.int64)
    out_alloc = np.empty((total, n))
    out_pay = np.empty((total, n))
    out_util = np.empty((total, n))
    record = monitor is not None
    rec_shape = (CHUNK, n, H) if record else (1, n, H)
    rec_score = np.zeros(rec_shape)
    rec_prob = np.zeros(rec_shape)
    snapshots = []
    cadence = config.logging_cadence

    t = 1
    while t <= total:
        end = min(t + CHUNK - 1, total)
        if t <= T:
            end = min(end, T)
        if cadence and t <= T:
            end = min(end, (t - 1) // cadence * cadence + cadence)
        nr = end - t + 1
        u_val = rng_val.random((nr, n))
        u_tie = rng_tie.random((nr, n))
        u_pol = np.stack([g.random((nr, 3)) for g in rng_pol], axis=1)
        sl = slice(t - 1, end)
        kernels.run_chunk(t, nr, config.T0, T, H, int(mech.kind), mech.diffs, mech.slots, cdf, pols, fbs, params,
                          tabs["sigma"], tabs["comp"], tabs["updates"], tabs["counts"], tabs["occurrences"],
                          tabs["aux"], u_val, u_pol, u_tie, ref_arr, config.window, agree, decisions,
                          out_val[sl], out_bid[sl], out_alloc[sl], out_pay[sl], out_util[sl], out_m[sl],
                          record, rec_score, rec_prob)
        if record:
            ts = np.arange(t, end + 1)
            keep = (ts > config.T0) & (ts <= T)
            if keep.any():
                k = np.flatnonzero(keep)
                monitor(DecisionLog(
                    t=np.repeat(ts[k], n),
                    context=out_val[sl][k].reshape(-1),
                    estimates=rec_score[k].reshape(-1, H).copy(),
                    distribution=rec_prob[k].reshape(-1, H).copy(),
                    bidder=np.tile(np.arange(n), k.size),
                ))
        if cadence and end <= T and end % cadence == 0:
            snapshots.append((end, tabs["sigma"].copy()))
        t = end + 1

    if ref is None:
        agree = decisions = None
    return TrajectoryLog(config, out_val, out_bid, out_m, out_alloc, out_pay, out_util, snapshots,
                         agree, decisions, tabs, backend_name())


def _run_one(args):
    config, seed = args
    return run_simulation(config.replace(seed=seed))


def run_trials(config: SimulationConfig, seeds: Sequence[int], workers: int = 1) -> list:
    """One independent trial per seed, returned in ``seeds`` order."""
    seeds = list(seeds)
    if not seeds:
        raise ConfigurationError("at least one seed required")
    jobs = [(config, s) for s in seeds]
    workers = min(workers or os.cpu_count() or 1, len(seeds))
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))

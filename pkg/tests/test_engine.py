import hashlib
import math

import numpy as np
import pytest
from scipy import stats

from bidlearn.engine import TrajectoryLog, make_config, run_simulation, run_trials
from bidlearn.grid import ConfigurationError, ValueDistribution
from bidlearn.mechanisms import Mechanism


def digest(log: TrajectoryLog) -> str:
    h = hashlib.sha256()
    for line in log.iter_jsonl():
        h.update(line.encode())
    return h.hexdigest()


def test_pure_exploration_is_uniform():
    T = 20_000
    log = run_simulation(make_config(T0=T, horizon=T, seed=8))
    band = 4 * math.sqrt(math.log(10) / T)
    for i in range(2):
        freq = np.bincount(log.bids[:, i], minlength=11)[1:] / T
        assert np.all(np.abs(freq - 0.1) <= band)
    assert set(log.phases()) == {"explore"}


def test_same_seed_same_log():
    cfg = make_config(mechanism="fpa", T0=300, horizon=6000, seed=21, rollout_rounds=200, logging_cadence=1000)
    a, b = run_simulation(cfg), run_simulation(cfg)
    assert digest(a) == digest(b)
    for key in a.tables:
        np.testing.assert_array_equal(a.tables[key], b.tables[key])
    assert len(a.snapshots) == 6 and [t for t, _ in a.snapshots] == list(range(1000, 6001, 1000))
    assert digest(run_simulation(cfg.replace(seed=22))) != digest(a)


def test_trials_are_order_and_parallelism_independent():
    cfg = make_config(T0=200, horizon=3000, seed=0)
    one = run_trials(cfg, [1])
    assert digest(one[0]) == digest(run_simulation(cfg.replace(seed=1)))
    fwd = run_trials(cfg, [1, 2])
    rev = run_trials(cfg, [2, 1])
    assert [digest(x) for x in fwd] == [digest(x) for x in rev[::-1]]
    par = run_trials(cfg, [1, 2, 3], workers=2)
    seq = run_trials(cfg, [1, 2, 3], workers=1)
    assert [digest(x) for x in par] == [digest(x) for x in seq]
    with pytest.raises(ConfigurationError):
        run_trials(cfg, [])


def test_value_sampling_matches_prior():
    T = 100_000
    pmf = [0.05, 0.05, 0.1, 0.1, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05]
    cfg = make_config(T0=T, horizon=T, seed=3)
    cfg = cfg.replace(distributions=[ValueDistribution.from_pmf(cfg.grid, pmf),
                                     ValueDistribution.uniform(cfg.grid)]).validate()
    log = run_simulation(cfg)
    for i, p in enumerate((pmf, [0.1] * 10)):
        obs = np.bincount(log.values[:, i], minlength=11)[1:]
        assert stats.chisquare(obs, np.array(p) * T).pvalue > 0.001


@pytest.mark.parametrize("mech", ["spa", "fpa", "vcg"])
def test_logged_rounds_are_consistent(mech):
    kw = {"multipliers": (1.0, 0.5), "n": 3} if mech == "vcg" else {}
    cfg = make_config(mechanism=mech, T0=100, horizon=3000, seed=5, rollout_rounds=100, **kw)
    log = run_simulation(cfg)
    H, n = 10, cfg.n
    assert len(log) == 3100
    assert log.values.min() >= 1 and log.values.max() <= H
    assert log.bids.min() >= 1 and log.bids.max() <= H
    for i in range(n):
        others = np.delete(log.bids, i, axis=1)
        np.testing.assert_array_equal(log.opp_max[:, i], others.max(axis=1))
    np.testing.assert_allclose(log.utilities, log.allocation * log.values / H - log.payments, atol=1e-12)
    if mech != "vcg":
        np.testing.assert_array_equal(log.allocation.sum(axis=1), 1.0)
        won = log.allocation > 0
        assert np.all(log.bids[won] == log.bids.max(axis=1))
        price = log.opp_max / H if mech == "spa" else log.bids / H
        np.testing.assert_allclose(log.payments[won], price[won])


def test_rollout_does_not_learn():
    cfg = make_config(T0=100, horizon=4000, seed=6)
    plain = run_simulation(cfg)
    rolled = run_simulation(cfg.replace(rollout_rounds=500))
    for key in plain.tables:
        np.testing.assert_array_equal(plain.tables[key], rolled.tables[key])
    np.testing.assert_array_equal(plain.bids, rolled.bids[:4000])
    assert list(rolled.phases()[[0, 99, 100, 3999, 4000]]) == ["explore", "explore", "exploit", "exploit", "rollout"]


def test_rollout_is_greedy():
    cfg = make_config(T0=100, horizon=4000, seed=6, rollout_rounds=2000)
    log = run_simulation(cfg)
    sl = log.rollout_slice()
    sig = log.tables["sigma"] / np.maximum(log.tables["updates"], 1)
    for i in range(2):
        for v, b in zip(log.values[sl, i], log.bids[sl, i]):
            assert sig[i, v - 1, b - 1] == sig[i, v - 1].max()


def test_jsonl_round_trip(tmp_path):
    cfg = make_config(mechanism="vcg", n=3, multipliers=(1.0, 0.5), T0=50, horizon=500, rollout_rounds=20, seed=1)
    log = run_simulation(cfg)
    path = tmp_path / "log.jsonl"
    log.write_jsonl(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 520
    back = TrajectoryLog.read_jsonl(path, cfg)
    for name in ("values", "bids", "opp_max", "allocation", "payments", "utilities"):
        np.testing.assert_array_equal(getattr(back, name), getattr(log, name))
    assert digest(back) == digest(log)


@pytest.mark.parametrize("kw,msg", [
    ({"n": 1}, "n >= 2"),
    ({"T0": 500, "horizon": 100}, "T >= T0"),
    ({"mechanism": "vcg", "multipliers": (1.0, 0.5), "n": 2}, "more bidders than slots"),
    ({"mechanism": "fpa", "n": 3, "fpa_theorem": True}, "n == 2"),
    ({"mechanism": "fpa", "H": 9, "fpa_theorem": True}, "even H"),
    ({"mechanism": "spa", "fpa_theorem": True}, "FPA mechanism"),
    ({"window": 0}, "window"),
])
def test_invalid_configs_name_the_invariant(kw, msg):
    base = {"T0": 10, "horizon": 100}
    base.update(kw)
    with pytest.raises(ConfigurationError, match=msg):
        make_config(**base)


def test_fpa_theorem_rejects_non_uniform_priors():
    cfg = make_config(mechanism="fpa", T0=10, horizon=100)
    skew = ValueDistribution.from_pmf(cfg.grid, [0.2] + [0.8 / 9] * 9)
    with pytest.raises(ConfigurationError, match="uniform"):
        cfg.replace(distributions=[skew, skew], fpa_theorem=True).validate()


def test_mechanism_object_accepted():
    cfg = make_config(mechanism=Mechanism.vcg((1.0, 0.5)), n=3, T0=10, horizon=100)
    assert cfg.mechanism.slots == 2

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bidlearn.analysis import truthful_dominance
from bidlearn.grid import ConfigurationError, make_grid
from bidlearn.mechanisms import Mechanism, MechanismKind, counterfactual_rewards, run_auction

import oracles

G10 = make_grid(10)


def test_spa_overbid_loses_money():
    out = run_auction(Mechanism.second_price(), [0.7, 0.6], [0.5, 0.5], G10, np.random.default_rng(0))
    assert out.winners == [0]
    assert out.payments[0] == pytest.approx(0.6)
    assert out.utilities[0] == pytest.approx(-0.1)
    assert out.payments[1] == 0 and out.utilities[1] == 0


def test_fpa_tie_is_a_coin_flip():
    rng = np.random.default_rng(1)
    wins = np.zeros(2)
    for _ in range(4000):
        out = run_auction(Mechanism.first_price(), [3, 3], [6, 6], G10, rng)
        assert len(out.winners) == 1
        w = out.winners[0]
        assert out.utilities[w] == pytest.approx(0.3)
        assert out.utilities[1 - w] == 0
        assert out.tie_events == [{"bid": 3, "bidders": [0, 1]}]
        wins[w] += 1
    assert abs(wins[0] / wins.sum() - 0.5) < 3 * 0.5 / np.sqrt(4000)


def test_vcg_two_positions():
    mech = Mechanism.vcg((1.0, 0.5))
    out = run_auction(mech, [0.9, 0.6, 0.2], [0.9, 0.6, 0.2], G10, np.random.default_rng(0))
    assert out.payments[0] == pytest.approx(0.4)
    assert out.utilities[0] == pytest.approx(0.5)
    np.testing.assert_allclose(out.allocation, [1.0, 0.5, 0.0])
    assert oracles.vcg_payment([9, 6, 2], (1.0, 0.5), 10, 0, [0, 1, 2]) == Fraction(2, 5)


def test_vcg_needs_more_bidders_than_slots():
    with pytest.raises(ConfigurationError):
        run_auction(Mechanism.vcg((1.0, 0.5)), [3, 2], [3, 2], G10, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        Mechanism.vcg((0.5, 1.0))
    with pytest.raises(ConfigurationError):
        Mechanism.vcg((1.0, 0.0))


def test_mechanism_parse():
    assert MechanismKind.parse("Second-Price") == MechanismKind.SPA
    assert MechanismKind.parse("fpa") == MechanismKind.FPA
    with pytest.raises(ConfigurationError):
        MechanismKind.parse("gsp")
    assert Mechanism.vcg((1.0, 0.6, 0.5)).rho == pytest.approx(0.1)


def test_counterfactual_examples():
    spa = counterfactual_rewards(Mechanism.second_price(), [5], 5, G10)
    assert spa[4] == 0 and spa[5] == 0 and spa[3] == 0
    fpa = counterfactual_rewards(Mechanism.first_price(), [4], 8, G10)
    assert fpa[3] == pytest.approx(0.2)
    assert fpa[4] == pytest.approx(0.3)
    assert fpa[2] == 0


def test_counterfactual_bid_above_tie_wins_outright():
    # FPA opponent 0.4, value 0.8: bidding 0.5 wins for sure and keeps 0.3
    fpa = counterfactual_rewards(Mechanism.first_price(), [0.4], 0.8, G10)
    assert fpa[4] == pytest.approx(0.8 - 0.5)


def test_vcg_one_slot_is_spa():
    vcg, spa = Mechanism.vcg((1.0,)), Mechanism.second_price()
    for H in (3, 5):
        g = make_grid(H)
        for n in (2, 3):
            for prof in itertools.product(range(1, H + 1), repeat=n - 1):
                for v in range(1, H + 1):
                    np.testing.assert_array_equal(counterfactual_rewards(vcg, prof, v, g),
                                                  counterfactual_rewards(spa, prof, v, g))


@pytest.mark.parametrize("kind,mults", [("spa", (1,)), ("fpa", (1,)), ("vcg", (1.0, 0.5)), ("vcg", (0.9, 0.6, 0.2))])
def test_counterfactual_matches_permutation_oracle(kind, mults):
    mech = Mechanism(MechanismKind.parse(kind), tuple(mults))
    H = 4
    g = make_grid(H)
    n = max(3, len(mults) + 1)
    for prof in itertools.product(range(1, H + 1), repeat=n - 1):
        for v in range(1, H + 1):
            got = counterfactual_rewards(mech, prof, v, g)
            want = [oracles.utility(kind, b, v, prof, H, mults) for b in range(1, H + 1)]
            np.testing.assert_allclose(got, [float(w) for w in want], atol=1e-12)


def test_spa_weak_dominance_exhaustive():
    for n in (2, 3):
        for H in (2, 5, 10):
            assert truthful_dominance(Mechanism.second_price(), n, H).ok


def test_vcg_truthful_exhaustive():
    for mults in [(1.0, 0.5), (1.0, 1.0), (0.8, 0.1)]:
        assert truthful_dominance(Mechanism.vcg(mults), 3, 5).ok


def test_fpa_is_not_truthful():
    rep = truthful_dominance(Mechanism.first_price(), 2, 4)
    assert not rep.ok


@pytest.mark.parametrize("kind,mults,bids,vals", [
    ("spa", (1,), [4, 4, 2], [6, 3, 5]),
    ("fpa", (1,), [3, 3, 3], [6, 4, 5]),
    ("vcg", (1.0, 0.5), [5, 5, 5], [6, 7, 4]),
    ("vcg", (1.0, 0.4), [5, 2, 2, 7], [6, 3, 4, 8]),
])
def test_realized_utility_averages_to_counterfactual(kind, mults, bids, vals):
    mech = Mechanism(MechanismKind.parse(kind), tuple(mults))
    rng = np.random.default_rng(11)
    trials = 20_000
    utils = np.array([run_auction(mech, bids, vals, G10, rng).utilities[0] for _ in range(trials)])
    expected = counterfactual_rewards(mech, bids[1:], vals[0], G10)[bids[0] - 1]
    sd = max(utils.std(), 1e-9)
    assert abs(utils.mean() - expected) <= 3 * sd / np.sqrt(trials)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(["spa", "fpa", "vcg"]), st.integers(3, 5), st.data())
def test_outcome_invariants(kind, n, data):
    H = 10
    mults = (1.0, 0.5) if kind == "vcg" else (1.0,)
    mech = Mechanism(MechanismKind.parse(kind), mults)
    bids = data.draw(st.lists(st.integers(1, H), min_size=n, max_size=n))
    vals = data.draw(st.lists(st.integers(1, H), min_size=n, max_size=n))
    out = run_auction(mech, bids, vals, G10, np.random.default_rng(data.draw(st.integers(0, 2 ** 32))))
    assert np.all(out.payments >= 0)
    np.testing.assert_allclose(out.utilities, out.allocation * np.array(vals) / H - out.payments, atol=1e-12)
    losers = out.allocation == 0
    assert np.all(out.payments[losers] == 0)
    if kind != "vcg":
        assert len(out.winners) == 1
        w = out.winners[0]
        assert bids[w] == max(bids)
        if kind == "spa":
            assert out.payments[w] == pytest.approx(sorted(bids)[-2] / H)
            assert out.payments[w] <= bids[w] / H
        else:
            assert out.payments[w] == pytest.approx(bids[w] / H)
    else:
        # the two highest bidders take the two positions
        top = sorted(range(n), key=lambda j: -bids[j])
        assert sorted(out.allocation, reverse=True)[:2] == [1.0, 0.5]
        assert bids[int(np.argmax(out.allocation))] == bids[top[0]]
        for j in range(n):
            pos = list(out.order).index(j)
            assert out.payments[j] == pytest.approx(
                float(oracles.vcg_payment(bids, mults, H, j, list(out.order))), abs=1e-12)
            assert out.allocation[j] == (mults[pos] if pos < len(mults) else 0.0)

"""Brute-force reference computations for the tests.

Nothing here imports the package. Everything is exact (Fractions) and
enumerates tie-breaks as explicit priority permutations, so it shares no
logic with the rank-counting shortcuts used in the library.
"""
from __future__ import annotations

import itertools
from fractions import Fraction


def orderings(bids):
    """Every equally likely allocation order: sort by bid, break ties by a
    uniformly random priority permutation. Yields (probability, order)."""
    n = len(bids)
    perms = list(itertools.permutations(range(n)))
    w = Fraction(1, len(perms))
    for prio in perms:
        yield w, sorted(range(n), key=lambda j: (-bids[j], prio[j]))


def single_item_utility(kind, bids, values, H, bidder=0):
    """Expected utility of ``bidder`` in an SPA/FPA round over tie-breaks."""
    total = Fraction(0)
    for w, order in orderings(bids):
        if order[0] != bidder:
            continue
        price = bids[order[1]] if kind == "spa" else bids[bidder]
        total += w * (Fraction(values[bidder], H) - Fraction(price, H))
    return total


def _vcg_utility_fixed_order(order, bids, values, mults, H, bidder):
    """Clarke-pivot VCG utility for one fixed position assignment.

    Payment = welfare others would get without ``bidder`` minus welfare they
    get with ``bidder`` present, using bids as reported values.
    """
    k = len(mults)

    def welfare(seq):
        return sum(mults[pos] * Fraction(bids[j], H) for pos, j in enumerate(seq[:k]))

    pos = order.index(bidder)
    with_me = welfare(order) - (mults[pos] * Fraction(bids[bidder], H) if pos < k else 0)
    without = welfare([j for j in order if j != bidder])
    pay = without - with_me
    gain = mults[pos] * Fraction(values[bidder], H) if pos < k else Fraction(0)
    return gain - pay, pay


def vcg_utility(bids, values, mults, H, bidder=0):
    mults = [Fraction(str(m)) for m in mults]
    total = Fraction(0)
    for w, order in orderings(bids):
        u, _ = _vcg_utility_fixed_order(order, bids, values, mults, H, bidder)
        total += w * u
    return total


def vcg_payment(bids, mults, H, bidder, order):
    mults = [Fraction(str(m)) for m in mults]
    _, pay = _vcg_utility_fixed_order(order, bids, [1] * len(bids), mults, H, bidder)
    return pay


def utility(kind, own_bid, value, opponents, H, mults=(1,)):
    bids = [own_bid] + list(opponents)
    values = [value] + [1] * len(opponents)
    if kind == "vcg":
        return vcg_utility(bids, values, mults, H)
    return single_item_utility(kind, bids, values, H)


def uniform_expected_utility(kind, n, H, v, b, mults=(1,)):
    profiles = list(itertools.product(range(1, H + 1), repeat=n - 1))
    return sum((utility(kind, b, v, p, H, mults) for p in profiles), Fraction(0)) / len(profiles)


def order_statistic_pmf(pmfs, k, H):
    """pmf of the k-th largest of independent draws, by full enumeration."""
    out = [Fraction(0)] * H
    for prof in itertools.product(range(1, H + 1), repeat=len(pmfs)):
        w = Fraction(1)
        for pmf, x in zip(pmfs, prof):
            w *= pmf[x - 1]
        if w:
            out[sorted(prof, reverse=True)[k - 1] - 1] += w
    return out


def advantage_probability(n, H, v, b):
    """P[u(v) - u(b) >= 1/H] for SPA with uniform opponents. The truthful and
    deviating auctions each draw their own tie-break permutation."""
    hit = Fraction(0)
    for prof in itertools.product(range(1, H + 1), repeat=n - 1):
        truth = _spa_outcomes([v] + list(prof), v, H)
        dev = _spa_outcomes([b] + list(prof), v, H)
        for pt, ut in truth:
            for pd, ud in dev:
                if ut - ud >= Fraction(1, H):
                    hit += pt * pd
    return hit / H ** (n - 1)


def _spa_outcomes(bids, v, H):
    out = []
    for w, order in orderings(bids):
        u = Fraction(v, H) - Fraction(bids[order[1]], H) if order[0] == 0 else Fraction(0)
        out.append((w, u))
    return out


def half_value_bid(v, H):
    """Grid bid b with v/2 <= b/H < v/2 + 1/H, found by scanning the grid."""
    hits = [b for b in range(1, H + 1) if Fraction(v, 2 * H) <= Fraction(b, H) < Fraction(v, 2 * H) + Fraction(1, H)]
    assert len(hits) == 1
    return hits[0]

"""Hot loops: counterfactual reward vectors, bid decisions, learner updates
and the chunked repeated-auction loop.

Everything here is written in the numba-compatible subset and compiled with
``@njit`` unless ``BIDLEARN_NUMBA=0``. Bids/values are integer numerators in
``1..H``; table index ``k-1`` holds grid point ``k/H``.
"""
import math

import numpy as np

from ._accel import jit

SPA, FPA, VCG = 0, 1, 2
EPS_GREEDY, MWU, EXP3, UCB1, WORST_ARM = 0, 1, 2, 3, 4
BANDIT, FULL_INFO, CROSS_LEARNING = 0, 1, 2

# columns of the per-bidder float parameter matrix
P_EPS0, P_EPS1, P_EPS_LEN, P_ETA, P_G0, P_GPOW, P_MIX, P_UCB_C = range(8)
N_PARAMS = 8


@jit
def single_item_rewards(kind, m, ties, v, H, out):
    """Tie-expected utility of every bid against opponent max ``m``.

    ``ties`` is the number of opponents bidding exactly ``m``.
    """
    for b in range(1, H + 1):
        if b < m:
            out[b - 1] = 0.0
            continue
        if kind == SPA:
            u = (v - m) / H
        else:
            u = (v - b) / H
        if b == m:
            u = u / (ties + 1)
        out[b - 1] = u


@jit
def vcg_rewards(diffs, k, opp_sorted, v, H, out):
    """Tie-expected VCG utility of every bid.

    ``opp_sorted`` holds opponents' bids in descending order and ``diffs[j-1]``
    is ``p_j - p_{j+1}``. Among tied bids the position is uniform.
    """
    n1 = opp_sorted.shape[0]
    for b in range(1, H + 1):
        above = 0
        ties = 0
        for j in range(n1):
            if opp_sorted[j] > b:
                above += 1
            elif opp_sorted[j] == b:
                ties += 1
        total = 0.0
        for pos in range(above + 1, above + ties + 2):
            if pos > k:
                break
            u = 0.0
            for j in range(pos, k + 1):
                u += diffs[j - 1] * (v - opp_sorted[j - 1]) / H
            total += u
        out[b - 1] = total / (ties + 1)


@jit
def opponent_view(bids, i, opp_sorted):
    """Fill ``opp_sorted`` with bids of j != i, descending; return (max, ties)."""
    n = bids.shape[0]
    c = 0
    for j in range(n):
        if j != i:
            opp_sorted[c] = bids[j]
            c += 1
    # insertion sort, n is small
    for a in range(1, c):
        x = opp_sorted[a]
        p = a - 1
        while p >= 0 and opp_sorted[p] < x:
            opp_sorted[p + 1] = opp_sorted[p]
            p -= 1
        opp_sorted[p + 1] = x
    m = opp_sorted[0]
    ties = 0
    for a in range(c):
        if opp_sorted[a] == m:
            ties += 1
    return m, ties


@jit
def reward_vector(kind, diffs, k, opp_sorted, m, ties, v, H, out):
    if kind == VCG:
        vcg_rewards(diffs, k, opp_sorted, v, H, out)
    else:
        single_item_rewards(kind, m, ties, v, H, out)


@jit
def settle(kind, diffs, k, bids, values, keys, H, order, alloc, pay, util):
    """Resolve one round. Ties are broken by the uniform ``keys``."""
    n = bids.shape[0]
    for j in range(n):
        order[j] = j
    for a in range(1, n):
        x = order[a]
        p = a - 1
        while p >= 0 and (bids[order[p]] < bids[x] or (bids[order[p]] == bids[x] and keys[order[p]] > keys[x])):
            order[p + 1] = order[p]
            p -= 1
        order[p + 1] = x
    for j in range(n):
        alloc[j] = 0.0
        pay[j] = 0.0
        util[j] = 0.0
    if kind == VCG:
        p_pos = 0.0
        for j in range(k):
            p_pos += diffs[j]
        for pos in range(1, k + 1):
            w = order[pos - 1]
            alloc[w] = p_pos
            p_pos -= diffs[pos - 1]
            pp = 0.0
            uu = 0.0
            for j in range(pos, k + 1):
                nxt = bids[order[j]]
                pp += diffs[j - 1] * nxt / H
                uu += diffs[j - 1] * (values[w] - nxt) / H
            pay[w] = pp
            util[w] = uu
    else:
        w = order[0]
        alloc[w] = 1.0
        if kind == SPA:
            pay[w] = bids[order[1]] / H
            util[w] = (values[w] - bids[order[1]]) / H
        else:
            pay[w] = bids[w] / H
            util[w] = (values[w] - bids[w]) / H


@jit
def epsilon_at(pp, t):
    length = pp[P_EPS_LEN]
    if length <= 0.0:
        return pp[P_EPS1]
    frac = t / length
    if frac > 1.0:
        frac = 1.0
    return pp[P_EPS0] + (pp[P_EPS1] - pp[P_EPS0]) * frac


@jit
def mwu_rate(pp, s):
    """Learning rate after ``s`` completed rounds."""
    if pp[P_G0] <= 0.0:
        return pp[P_ETA]
    if s < 1:
        return 0.0
    g = pp[P_G0] * s ** (-pp[P_GPOW])
    if g >= 1.0:
        return 0.0
    return math.log(1.0 / g) / (g * s)


@jit
def scores(i, c, H, pol, fb, sig, upd, occ, aux, s, means, est):
    """Mean rewards and estimated cumulative rewards for context ``c``."""
    if fb == CROSS_LEARNING:
        ref_n = upd[i, c - 1, 0]
    else:
        ref_n = occ[i, c - 1]
    for b in range(H):
        nb = upd[i, c - 1, b]
        means[b] = sig[i, c - 1, b] / nb if nb > 0 else 0.0
        if pol == EXP3:
            est[b] = 2.0 * aux[i, c - 1, b] - ref_n
        else:
            est[b] = means[b] * ref_n


@jit
def tied_best(vals, H, sign):
    """Return (best value, number of indices attaining it) under ``sign``."""
    best = sign * vals[0]
    cnt = 1
    for b in range(1, H):
        x = sign * vals[b]
        if x > best:
            best = x
            cnt = 1
        elif x == best:
            cnt += 1
    return best, cnt


@jit
def pick_tied(vals, H, sign, best, cnt, u):
    r = int(u * cnt)
    if r >= cnt:
        r = cnt - 1
    for b in range(H):
        if sign * vals[b] == best:
            if r == 0:
                return b + 1
            r -= 1
    return H


@jit
def softmax_into(est, H, eta, probs):
    hi = eta * est[0]
    for b in range(1, H):
        if eta * est[b] > hi:
            hi = eta * est[b]
    z = 0.0
    for b in range(H):
        probs[b] = math.exp(eta * est[b] - hi)
        z += probs[b]
    for b in range(H):
        probs[b] /= z


@jit
def sample_from(probs, H, u):
    acc = 0.0
    last = 0
    for b in range(H):
        if probs[b] > 0.0:
            last = b
            acc += probs[b]
            if u < acc:
                return b + 1
    return last + 1


@jit
def decide(i, c, t, T0, H, pol, pp, fb, sig, upd, occ, aux, u3, greedy, means, est, probs, want_dist):
    """Choose bidder ``i``'s bid at round ``t`` for context ``c``.

    Returns ``(bid, probability of that bid)``. When ``want_dist`` is set,
    ``probs`` receives the full action distribution and ``est`` the
    estimated cumulative rewards the policy acted on.
    """
    if t <= T0 and not greedy:
        b = int(u3[0] * H) + 1
        if b > H:
            b = H
        if want_dist:
            scores(i, c, H, pol, fb, sig, upd, occ, aux, t - 1, means, est)
            for a in range(H):
                probs[a] = 1.0 / H
        return b, 1.0 / H
    scores(i, c, H, pol, fb, sig, upd, occ, aux, t - 1, means, est)
    if pol == MWU or pol == EXP3:
        if greedy:
            best, cnt = tied_best(est, H, 1.0)
            b = pick_tied(est, H, 1.0, best, cnt, u3[2])
            if want_dist:
                for a in range(H):
                    probs[a] = 1.0 / cnt if est[a] == best else 0.0
            return b, 1.0 / cnt
        if pol == MWU:
            softmax_into(est, H, mwu_rate(pp, t - 1), probs)
        else:
            softmax_into(est, H, pp[P_ETA], probs)
            mix = pp[P_MIX]
            for a in range(H):
                probs[a] = (1.0 - mix) * probs[a] + mix / H
        b = sample_from(probs, H, u3[0])
        return b, probs[b - 1]
    if pol == UCB1 and not greedy:
        # index = mean + bonus; unplayed arms first
        n_c = occ[i, c - 1] if fb != CROSS_LEARNING else upd[i, c - 1, 0]
        logn = math.log(n_c) if n_c > 1 else 0.0
        for a in range(H):
            na = upd[i, c - 1, a]
            if na == 0:
                probs[a] = math.inf
            else:
                probs[a] = means[a] + pp[P_UCB_C] * math.sqrt(2.0 * logn / na)
        best, cnt = tied_best(probs, H, 1.0)
        b = pick_tied(probs, H, 1.0, best, cnt, u3[2])
        if want_dist:
            for a in range(H):
                probs[a] = 1.0 / cnt if probs[a] == best else 0.0
        return b, 1.0 / cnt
    sign = -1.0 if pol == WORST_ARM else 1.0
    best, cnt = tied_best(means, H, sign)
    eps = 0.0
    if pol == EPS_GREEDY and not greedy:
        eps = epsilon_at(pp, t)
    if eps > 0.0 and u3[0] < eps:
        b = int(u3[1] * H) + 1
        if b > H:
            b = H
    else:
        b = pick_tied(means, H, sign, best, cnt, u3[2])
    p_b = eps / H
    if sign * means[b - 1] == best:
        p_b += (1.0 - eps) / cnt
    if want_dist:
        for a in range(H):
            probs[a] = eps / H
            if sign * means[a] == best:
                probs[a] += (1.0 - eps) / cnt
    return b, p_b


@jit
def kahan_add(sig, comp, i, c, b, x):
    y = x - comp[i, c, b]
    s = sig[i, c, b] + y
    comp[i, c, b] = (s - sig[i, c, b]) - y
    sig[i, c, b] = s


@jit
def learn(i, c, b, utility, p_b, kind, diffs, k, opp_sorted, m, ties, H, pol, fb, sig, comp, upd, cnt, occ, aux, rvec):
    """Feed one round's outcome back into bidder ``i``'s tables."""
    occ[i, c - 1] += 1
    cnt[i, c - 1, b - 1] += 1
    if fb == BANDIT:
        kahan_add(sig, comp, i, c - 1, b - 1, utility)
        upd[i, c - 1, b - 1] += 1
        if pol == EXP3:
            aux[i, c - 1, b - 1] += 0.5 * (utility + 1.0) / p_b
        return
    lo = c
    hi = c
    if fb == CROSS_LEARNING:
        lo = 1
        hi = H
    for ctx in range(lo, hi + 1):
        reward_vector(kind, diffs, k, opp_sorted, m, ties, ctx, H, rvec)
        for a in range(H):
            kahan_add(sig, comp, i, ctx - 1, a, rvec[a])
            upd[i, ctx - 1, a] += 1
            if pol == EXP3:
                aux[i, ctx - 1, a] += 0.5 * (rvec[a] + 1.0)


@jit
def run_chunk(t_start, n_rounds, T0, T_train, H, kind, diffs, k, cdf, pols, fbs, params,
              sig, comp, upd, cnt, occ, aux,
              u_val, u_pol, u_tie, ref, window, agree, decisions,
              out_val, out_bid, out_alloc, out_pay, out_util, out_m,
              record, rec_score, rec_prob):
    """Play rounds ``t_start .. t_start+n_rounds-1`` (1-based clock).

    Rounds past ``T_train`` are greedy rollout rounds without updates.
    ``agree``/``decisions`` tally exploitation-phase bids that fall in the
    reference set ``ref[value-1, bid-1]``, per reporting window.
    """
    n = cdf.shape[0]
    values = np.empty(n, dtype=np.int64)
    bids = np.empty(n, dtype=np.int64)
    pbids = np.empty(n, dtype=np.float64)
    order = np.empty(n, dtype=np.int64)
    alloc = np.empty(n, dtype=np.float64)
    pay = np.empty(n, dtype=np.float64)
    util = np.empty(n, dtype=np.float64)
    opp = np.empty(max(n - 1, 1), dtype=np.int64)
    means = np.empty(H, dtype=np.float64)
    est = np.empty(H, dtype=np.float64)
    probs = np.empty(H, dtype=np.float64)
    rvec = np.empty(H, dtype=np.float64)
    for r in range(n_rounds):
        t = t_start + r
        greedy = t > T_train
        for i in range(n):
            x = 1
            while x < H and u_val[r, i] >= cdf[i, x - 1]:
                x += 1
            values[i] = x
        for i in range(n):
            b, pb = decide(i, values[i], t, T0, H, pols[i], params[i], fbs[i], sig, upd, occ, aux,
                           u_pol[r, i], greedy, means, est, probs, record)
            bids[i] = b
            pbids[i] = pb
            if record:
                for a in range(H):
                    rec_score[r, i, a] = est[a]
                    rec_prob[r, i, a] = probs[a]
        settle(kind, diffs, k, bids, values, u_tie[r], H, order, alloc, pay, util)
        for i in range(n):
            m, ties = opponent_view(bids, i, opp)
            out_val[r, i] = values[i]
            out_bid[r, i] = bids[i]
            out_alloc[r, i] = alloc[i]
            out_pay[r, i] = pay[i]
            out_util[r, i] = util[i]
            out_m[r, i] = m
            if greedy:
                continue
            if t > T0:
                w = (t - T0 - 1) // window
                decisions[w] += 1
                if ref[values[i] - 1, bids[i] - 1]:
                    agree[w] += 1
            learn(i, values[i], bids[i], util[i], pbids[i], kind, diffs, k, opp, m, ties, H,
                  pols[i], fbs[i], sig, comp, upd, cnt, occ, aux, rvec)


@jit
def replay_rewards(kind, diffs, k, values, bids, H, bidder, checkpoints, out_cum, realized):
    """Exact counterfactual reward sums per context, accumulated from a log.

    ``out_cum[q, c-1, b-1]`` is the sum of bidder's counterfactual utilities
    for bid ``b`` over rounds ``<= checkpoints[q]`` with value ``c``;
    ``realized[q, c-1]`` is the matching sum of tie-expected realized
    utilities.
    """
    T = values.shape[0]
    n = values.shape[1]
    opp = np.empty(max(n - 1, 1), dtype=np.int64)
    rvec = np.empty(H, dtype=np.float64)
    cum = np.zeros((H, H), dtype=np.float64)
    real = np.zeros(H, dtype=np.float64)
    q = 0
    for r in range(T):
        while q < checkpoints.shape[0] and checkpoints[q] == r:
            out_cum[q] = cum
            realized[q] = real
            q += 1
        m, ties = opponent_view(bids[r], bidder, opp)
        v = values[r, bidder]
        reward_vector(kind, diffs, k, opp, m, ties, v, H, rvec)
        for a in range(H):
            cum[v - 1, a] += rvec[a]
        real[v - 1] += rvec[bids[r, bidder] - 1]
    while q < checkpoints.shape[0]:
        out_cum[q] = cum
        realized[q] = real
        q += 1

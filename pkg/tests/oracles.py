"""Brute-force reference solutions used by the tests.

These are deliberately naive: they enumerate every way of pooling
consecutive sites into blocks and keep the best block structure that is
feasible.  Only usable for tiny problems.
"""
import itertools
import math

import numpy as np
from scipy.optimize import brentq


def partitions(n):
    """All splits of ``range(n)`` into consecutive nonempty blocks."""
    for cuts in itertools.product((False, True), repeat=n - 1):
        blocks, start = [], 0
        for i, c in enumerate(cuts, start=1):
            if c:
                blocks.append((start, i))
                start = i
        blocks.append((start, n))
        yield blocks


def isotonic_ls(y, w):
    """Weighted least squares nondecreasing fit by exhaustive block search."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    best, best_val = None, math.inf
    for blocks in partitions(y.size):
        means = [np.average(y[a:b], weights=w[a:b]) for a, b in blocks]
        if any(m2 < m1 - 1e-14 for m1, m2 in zip(means, means[1:])):
            continue
        fitv = np.concatenate([np.full(b - a, m) for (a, b), m in zip(blocks, means)])
        val = float(np.sum(w * (y - fitv) ** 2))
        if val < best_val * (1 - 1e-12):
            best, best_val = fitv, val
    return best


def minmax_npmle(delta):
    """``max_{s <= i} min_{t >= i}`` of the mean of ``delta[s..t]``."""
    d = np.asarray(delta, dtype=float)
    n = d.size
    out = np.empty(n)
    for i in range(n):
        out[i] = max(min(d[s : t + 1].mean() for t in range(i, n)) for s in range(i + 1))
    return out


def _block_root(family, delta, off):
    # maximize sum q(delta_i, off_i + x) over a scalar x
    from pltrans.families import q_eval

    def score(x):
        return float(np.sum(q_eval(family, delta, off + x).q1))

    lo, hi = -1.0, 1.0
    while score(lo) < 0:
        lo *= 2
    while score(hi) > 0:
        hi *= 2
    return brentq(score, lo, hi, xtol=1e-13, rtol=1e-13, maxiter=500)


def profile_h_oracle(family, site, delta, off):
    """Maximum of ``sum_i q(delta_i, off_i + H[site_i])`` over nondecreasing ``H``.

    ``site`` holds consecutive integer labels ``0..B-1``.  Returns the best
    objective (a sum, not a mean) and the maximizing ``H``.
    """
    from pltrans.families import q_eval

    B = int(site.max()) + 1
    best_val, best_H = -math.inf, None
    for blocks in partitions(B):
        vals = []
        ok = True
        for a, b in blocks:
            mask = (site >= a) & (site < b)
            d = delta[mask]
            if d.min() == d.max():
                ok = False
                break
            vals.append(_block_root(family, d, off[mask]))
        if not ok or any(v2 < v1 for v1, v2 in zip(vals, vals[1:])):
            continue
        H = np.concatenate([np.full(b - a, v) for (a, b), v in zip(blocks, vals)])
        val = float(np.sum(q_eval(family, delta, off + H[site]).q))
        if val > best_val:
            best_val, best_H = val, H
    return best_val, best_H


def random_instance(rng, family_pool, n_max=8):
    """A small current status sample satisfying the provision, with ties."""
    while True:
        n = int(rng.integers(2, n_max + 1))
        v = rng.integers(0, max(2, n - 1), n).astype(float) + rng.choice([0.0, 0.5], n)
        delta = rng.integers(0, 2, n)
        order = np.argsort(v, kind="stable")
        v, delta = v[order], delta[order]
        ones, zeros = v[delta == 1], v[delta == 0]
        if ones.size and zeros.size and ones.min() <= zeros.max():
            break
    off = rng.normal(0, 0.7, n)
    fam = family_pool[int(rng.integers(len(family_pool)))]
    return v, delta, off, fam

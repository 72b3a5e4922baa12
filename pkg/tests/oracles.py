"""Slow, direct reference computations used to check the fast implementations."""

import itertools
import math


def rs_direct(values, n):
    """R(n)/S(n) straight from the definition, in plain Python."""
    p = [float(v) for v in values[:n]]
    if max(p) == min(p):
        return 0.0
    m = math.fsum(p) / n
    dev = [v - m for v in p]
    z, acc = [], 0.0
    for d in dev:
        acc += d
        z.append(acc)
    s = math.sqrt(math.fsum(d * d for d in dev) / n)
    return (max(z) - min(z)) / s


def tau_b_pairs(x, y):
    """Kendall tau-b by enumerating every pair."""
    n = len(x)
    s = n1 = n2 = 0
    for i, j in itertools.combinations(range(n), 2):
        dx = (x[i] > x[j]) - (x[i] < x[j])
        dy = (y[i] > y[j]) - (y[i] < y[j])
        s += dx * dy
        n1 += dx == 0
        n2 += dy == 0
    n0 = n * (n - 1) // 2
    if n0 == n1 or n0 == n2:
        return 0.0
    return s / math.sqrt((n0 - n1) * (n0 - n2))


def knn_bruteforce(train, labels, query, k, scale):
    """Plain sort of (squared scaled distance, index); ties in votes go to the smaller label."""
    d = sorted(
        (sum(((q - x) / s) ** 2 for q, x, s in zip(query, row, scale)), i) for i, row in enumerate(train)
    )
    votes = {}
    for _, i in d[:k]:
        votes[labels[i]] = votes.get(labels[i], 0) + 1
    best = max(votes.values())
    return min(lab for lab, v in votes.items() if v == best)


def best_depth2_accuracy(points, labels):
    """Highest training accuracy over every axis-aligned tree of depth <= 2."""
    n_feat = len(points[0])
    cuts = []
    for f in range(n_feat):
        vals = sorted({p[f] for p in points})
        cuts += [(f, (a + b) / 2) for a, b in zip(vals, vals[1:])]

    def leaf_hits(idx):
        if not idx:
            return 0
        counts = {}
        for i in idx:
            counts[labels[i]] = counts.get(labels[i], 0) + 1
        return max(counts.values())

    def subtree_hits(idx):
        best = leaf_hits(idx)
        for f, t in cuts:
            left = [i for i in idx if points[i][f] <= t]
            right = [i for i in idx if points[i][f] > t]
            best = max(best, leaf_hits(left) + leaf_hits(right))
        return best

    idx = list(range(len(points)))
    best = leaf_hits(idx)
    for f, t in cuts:
        left = [i for i in idx if points[i][f] <= t]
        right = [i for i in idx if points[i][f] > t]
        best = max(best, subtree_hits(left) + subtree_hits(right))
    return best / len(points)

"""Naive reference implementations used as independent oracles.

Deliberately written with explicit Python loops and scalar math (no numpy)
so the vectorized library code is checked along a separate route.  Inputs
are nested lists (or anything ``float()``-indexable row by row).
"""

import math


def _rows(x):
    return [[float(v) for v in row] for row in x]


def dot(a, b):
    return sum(ai * bi for ai, bi in zip(a, b))


def gibbs(z1, z2, tau):
    """Column-stochastic matrix: P[i][j] = exp(z1_i . z2_j / tau) normalized over i."""
    z1, z2 = _rows(z1), _rows(z2)
    m = len(z1)
    p = [[0.0] * m for _ in range(m)]
    for j in range(m):
        exps = [math.exp(dot(z1[i], z2[j]) / tau) for i in range(m)]
        total = sum(exps)
        for i in range(m):
            p[i][j] = exps[i] / total
    return p


def info_nce(u, v, tau):
    u, v = _rows(u), _rows(v)
    m = len(u)
    total = 0.0
    for i in range(m):
        num = math.exp(dot(u[i], v[i]) / tau)
        den = sum(math.exp(dot(u[t], v[i]) / tau) for t in range(m))
        total -= math.log(num / den)
    return total


def cmd(za, zb, tau):
    pa = gibbs(za, za, tau)
    pb = gibbs(zb, zb, tau)
    m = len(pa)
    return -sum(pa[i][j] * math.log(pb[i][j]) for i in range(m) for j in range(m))


def cmc(za, zb, tau):
    return info_nce(za, zb, tau) + info_nce(zb, za, tau)


def interp(alpha, za, zb, tau):
    return alpha * cmc(za, zb, tau) + (1.0 - alpha) * cmd(za, zb, tau)


def teacher_entropy(za, tau):
    """Sum over columns of the entropy of the teacher's similarity distribution."""
    pa = gibbs(za, za, tau)
    m = len(pa)
    return -sum(pa[i][j] * math.log(pa[i][j]) for i in range(m) for j in range(m))


def ce(logits, labels):
    logits = _rows(logits)
    total = 0.0
    for row, label in zip(logits, labels):
        den = sum(math.exp(v) for v in row)
        total -= math.log(math.exp(row[int(label)]) / den)
    return total / len(logits)


def l2_align(za, zb):
    za, zb = _rows(za), _rows(zb)
    total = 0.0
    for ra, rb in zip(za, zb):
        total += sum((a - b) ** 2 for a, b in zip(ra, rb))
    return total / len(za)


def stats_align(za, zb):
    za, zb = _rows(za), _rows(zb)

    def moments(z):
        m, d = len(z), len(z[0])
        mean = [sum(z[i][k] for i in range(m)) / m for k in range(d)]
        var = [sum((z[i][k] - mean[k]) ** 2 for i in range(m)) / (m - 1) for k in range(d)]
        return mean, var

    mean_a, var_a = moments(za)
    mean_b, var_b = moments(zb)
    out = sum((a - b) ** 2 for a, b in zip(mean_a, mean_b))
    out += sum((a - b) ** 2 for a, b in zip(var_a, var_b))
    return out


def column_tv(pa, pb):
    """Mean over columns of half the L1 distance between stochastic matrices."""
    m = len(pa)
    per_col = [0.5 * sum(abs(pa[i][j] - pb[i][j]) for i in range(m)) for j in range(m)]
    return sum(per_col) / m


def matmul(a, b):
    a, b = _rows(a), _rows(b)
    n, k, m = len(a), len(b), len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            out[i][j] = sum(a[i][t] * b[t][j] for t in range(k))
    return out

"""Brute-force reference implementations written with plain Python floats.

Nothing here imports numpy, torch or the package under test; each function
is a literal transcription of a formula with explicit loops, so agreement
with the vectorised code is meaningful.
"""

from __future__ import annotations

import math


def soft_assignment(h, centers, t=1.0):
    out = []
    for row in h:
        k = []
        for c in centers:
            d2 = sum((a - b) ** 2 for a, b in zip(row, c))
            k.append((1.0 + d2 / t) ** (-(t + 1.0) / 2.0))
        s = sum(k)
        out.append([v / s for v in k])
    return out


def target_distribution(q):
    n_rows, n_cols = len(q), len(q[0])
    f = [sum(q[i][j] for i in range(n_rows)) for j in range(n_cols)]
    out = []
    for i in range(n_rows):
        w = [q[i][j] ** 2 / f[j] for j in range(n_cols)]
        s = sum(w)
        out.append([v / s for v in w])
    return out


def loss_rec(x, x_rec):
    n = len(x)
    total = 0.0
    for i in range(n):
        for j in range(len(x[i])):
            total += (x_rec[i][j] - x[i][j]) ** 2
    return total / (2.0 * n)


loss_pred = loss_rec


def loss_ds(p, g, floor=1e-12):
    total = 0.0
    for i in range(len(p)):
        for j in range(len(p[i])):
            if p[i][j] > 0:
                total += p[i][j] * (math.log(p[i][j]) - math.log(max(g[i][j], floor)))
    return total


def total_loss(l_rec, l_ds, l_pred, lambda1=0.1, lambda2=1.0):
    return lambda1 * l_ds + lambda2 * l_rec + l_pred


def build_mask(labels):
    n = len(labels)
    return [[1.0 if labels[i] == labels[j] else 0.0 for j in range(n)] for i in range(n)]


def mask_vector(mask):
    n = len(mask)
    out = []
    for i in range(n):
        out.append(1.0 if any(mask[i][j] and j != i for j in range(n)) else 0.0)
    return out


def propagation_operator(adj):
    n = len(adj)
    a = [[adj[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    d = [sum(a[i]) for i in range(n)]
    return [[a[i][j] / math.sqrt(d[i] * d[j]) for j in range(n)] for i in range(n)]


def pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return 0.0
    return sxy / math.sqrt(sxx * syy)


def dtw(x, y, radius=-1):
    """Plain recursion table, symmetric1 steps, squared cost, sqrt at the end."""
    n, m = len(x), len(y)
    band = max(radius, abs(n - m)) if radius >= 0 else max(n, m)
    inf = float("inf")
    table = [[inf] * (m + 1) for _ in range(n + 1)]
    table[0][0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if abs(i - j) > band:
                continue
            cost = (x[i - 1] - y[j - 1]) ** 2
            table[i][j] = cost + min(table[i - 1][j], table[i][j - 1], table[i - 1][j - 1])
    return math.sqrt(table[n][m])


def silhouette(points, labels):
    """Mean silhouette with Euclidean distance; singleton clusters score 0."""
    dist = lambda a, b: math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b)))  # noqa: E731
    clusters = sorted(set(labels))
    scores = []
    for i, p in enumerate(points):
        own = [dist(p, points[k]) for k in range(len(points)) if labels[k] == labels[i] and k != i]
        if not own:
            scores.append(0.0)
            continue
        a = sum(own) / len(own)
        b = min(
            sum(dist(p, points[k]) for k in range(len(points)) if labels[k] == c)
            / sum(1 for k in range(len(points)) if labels[k] == c)
            for c in clusters if c != labels[i]
        )
        scores.append((b - a) / max(a, b))
    return sum(scores) / len(scores)


def gcn_forward(x, op, h1, h2, w0, w1, w2, eps):
    """Dense three-layer propagation with fused autoencoder layers, row softmax."""

    def matmul(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))]
                for i in range(len(a))]

    def relu(a):
        return [[max(v, 0.0) for v in row] for row in a]

    def mix(a, b):
        return [[(1 - eps) * u + eps * v for u, v in zip(ra, rb)] for ra, rb in zip(a, b)]

    g1 = mix(relu(matmul(op, matmul(x, w0))), h1)
    g2 = mix(relu(matmul(op, matmul(g1, w1))), h2)
    logits = matmul(op, matmul(g2, w2))
    out = []
    for row in logits:
        m = max(row)
        e = [math.exp(v - m) for v in row]
        s = sum(e)
        out.append([v / s for v in e])
    return out

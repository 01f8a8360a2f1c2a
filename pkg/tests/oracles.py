"""Independent reference implementations used to check the library.

These are deliberately naive (loops, explicit sums, enumeration) and share
no code with the package under test.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def moments(xs):
    """Population mean, variance, skewness, kurtosis of a list by direct summation."""
    n = len(xs)
    mu = math.fsum(xs) / n
    m2 = math.fsum((x - mu) ** 2 for x in xs) / n
    m3 = math.fsum((x - mu) ** 3 for x in xs) / n
    m4 = math.fsum((x - mu) ** 4 for x in xs) / n
    if m2 < 1e-12:
        return mu, m2, 0.0, 0.0
    return mu, m2, m3 / m2**1.5, m4 / m2**2


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix built from its cosine definition."""
    c = np.empty((n, n))
    for k in range(n):
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for i in range(n):
            c[k, i] = scale * math.cos(math.pi * (2 * i + 1) * k / (2 * n))
    return c


def amdf(d, n):
    """1-based formula evaluated literally."""
    L = len(d)
    return [sum(abs(d[i - 1] - d[i - 1 + k]) for i in range(1, n + 1)) / n for k in range(1, L - n + 1)]


def path_prob(pi, A, B, obs, path):
    p = pi[path[0]] * B[path[0]][obs[0]]
    for t in range(1, len(obs)):
        p *= A[path[t - 1]][path[t]] * B[path[t]][obs[t]]
    return p


def brute_forward(pi, A, B, obs) -> float:
    total = math.fsum(path_prob(pi, A, B, obs, p) for p in itertools.product(range(len(pi)), repeat=len(obs)))
    return math.log(total) if total > 0 else -math.inf


def brute_viterbi(pi, A, B, obs):
    """Best path (lexicographically smallest among ties) and its log-probability."""
    best, best_path = -1.0, None
    for path in itertools.product(range(len(pi)), repeat=len(obs)):
        p = path_prob(pi, A, B, obs, path)
        if p > best * (1 + 1e-12):
            best, best_path = p, path
    return best_path, (math.log(best) if best > 0 else -math.inf)


def ap_net_similarity(s, exemplars) -> float:
    """Sum of exemplar preferences plus each other point's best exemplar similarity."""
    ex = set(exemplars)
    total = sum(s[k][k] for k in ex)
    total += sum(max(s[i][k] for k in ex) for i in range(len(s)) if i not in ex)
    return total


def ap_optimal_sets(s, tol=1e-9) -> set[tuple[int, ...]]:
    """Every exemplar set reaching the maximum net similarity."""
    n = len(s)
    values = {}
    for r in range(1, n + 1):
        for ex in itertools.combinations(range(n), r):
            values[ex] = ap_net_similarity(s, ex)
    top = max(values.values())
    return {ex for ex, v in values.items() if v >= top - tol}


def nearest(exemplars, v) -> int:
    best, arg = math.inf, -1
    for k, e in enumerate(exemplars):
        d = math.fsum((a - b) ** 2 for a, b in zip(e, v))
        if d < best:
            best, arg = d, k
    return arg


def frame_scores(pred, truth, background="background"):
    """Precision, recall, F1 from explicit confusion counting."""
    tp = sum(1 for p, t in zip(pred, truth) if p == t and t != background)
    n_pred = sum(1 for p in pred if p != background)
    n_true = sum(1 for t in truth if t != background)
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_true if n_true else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f

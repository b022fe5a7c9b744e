"""Brute-force reference implementations used to check the package.

Nothing here imports from ``retropredict``; each function is written
independently and favours obviousness over speed.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def auc_pairs(scores, labels) -> float:
    """O(n^2) count of concordant positive/negative pairs, ties counting one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def _average_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_enumerate(diffs, alternative="two-sided") -> float:
    """Exact signed-rank p-value by listing all 2^n sign assignments (Pratt zeros)."""
    ranks_all = _average_ranks([abs(d) for d in diffs])
    ranks = [r for r, d in zip(ranks_all, diffs) if d != 0]
    observed = sum(r for r, d in zip(ranks_all, diffs) if d > 0)
    n = len(ranks)
    ge = le = 0
    for signs in itertools.product((0, 1), repeat=n):
        t = sum(r for r, s in zip(ranks, signs) if s)
        ge += t >= observed - 1e-9
        le += t <= observed + 1e-9
    total = 2 ** n
    if alternative == "greater":
        return ge / total
    if alternative == "less":
        return le / total
    return min(1.0, 2.0 * min(ge, le) / total)


def bh_direct(p_values, alpha=0.05):
    """Reject H_(1..k) for the largest k with p_(k) <= k alpha / m, written as a plain loop."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: (p_values[i], i))
    k_max = 0
    for k in range(1, m + 1):
        if p_values[order[k - 1]] <= k * alpha / m:
            k_max = k
    reject = [False] * m
    for k in range(k_max):
        reject[order[k]] = True
    return reject


def sigmoid_nll(alpha, beta, x, t) -> float:
    """Mean cross-entropy of f(x) = 1/(1+exp(alpha+beta x)) against targets t."""
    total = 0.0
    for xi, ti in zip(x, t):
        z = alpha + beta * xi
        # log f = -log(1+e^z), log(1-f) = z - log(1+e^z)
        softplus = z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))
        total += ti * softplus + (1.0 - ti) * (softplus - z)
    return total / len(x)


def grid_min_nll(x, t, a_range=(-20.0, 20.0), b_range=(0.0, 1.0), n=101):
    """Smallest NLL over an n-by-n grid of the parameter box (vectorized for speed)."""
    a = np.linspace(*a_range, n)[:, None, None]
    b = np.linspace(*b_range, n)[None, :, None]
    x = np.asarray(x, dtype=float)[None, None, :]
    t = np.asarray(t, dtype=float)[None, None, :]
    z = a + b * x
    nll = np.mean(np.logaddexp(0.0, z) - (1.0 - t) * z, axis=2)
    i, j = np.unravel_index(np.argmin(nll), nll.shape)
    return float(nll[i, j]), float(a[i, 0, 0]), float(b[0, j, 0])


def platt_grid_min(d, t, a_range=(-20.0, 0.0), b_range=(-10.0, 10.0), n=101, refine=8):
    """Grid search (with successive zooming) for Platt's (A, B) with A <= 0."""
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    lo_a, hi_a = a_range
    lo_b, hi_b = b_range
    best = None
    for _ in range(refine + 1):
        A = np.linspace(lo_a, hi_a, n)[:, None, None]
        B = np.linspace(lo_b, hi_b, n)[None, :, None]
        z = A * d[None, None, :] + B
        nll = np.mean(np.logaddexp(0.0, z) - (1.0 - t) * z, axis=2)
        i, j = np.unravel_index(np.argmin(nll), nll.shape)
        a0, b0 = float(A[i, 0, 0]), float(B[0, j, 0])
        if best is None or nll[i, j] < best[0]:
            best = (float(nll[i, j]), a0, b0)
        da, db = (hi_a - lo_a) / (n - 1) * 2, (hi_b - lo_b) / (n - 1) * 2
        lo_a, hi_a = max(a_range[0], a0 - da), min(a_range[1], a0 + da)
        lo_b, hi_b = b0 - db, b0 + db
    return best


def svm_dual_pg(Z, y, C, n_iter=200000, tol=1e-13):
    """Projected gradient ascent on the hinge-loss SVM dual with step 1/L."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    Q = (y[:, None] * Z) @ (y[:, None] * Z).T
    L = max(np.linalg.eigvalsh(Q).max(), 1e-12)
    a = np.zeros(len(y))
    for _ in range(n_iter):
        grad = 1.0 - Q @ a
        new = np.clip(a + grad / L, 0.0, C)
        if np.max(np.abs(new - a)) < tol:
            a = new
            break
        a = new
    w = (a * y) @ Z
    return w, a


def svm_primal(w, Z, y, C) -> float:
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - y * (Z @ w)).sum())


def svm_dual(a, Z, y) -> float:
    w = (a * y) @ Z
    return float(a.sum() - 0.5 * w @ w)


def kkt_residual(a, Z, y, C) -> float:
    """Largest violation of the box-constrained dual optimality conditions."""
    w = (a * y) @ Z
    g = y * (Z @ w) - 1.0
    res = 0.0
    for ai, gi in zip(a, g):
        if ai <= 0.0:
            res = max(res, -gi)
        elif ai >= C:
            res = max(res, gi)
        else:
            res = max(res, abs(gi))
    return res


def best_two_partition_sse(points):
    """Exhaustive minimum within-cluster SSE over all 2-partitions."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    best = (np.inf, None)
    for mask in range(1, 2 ** (n - 1)):
        sel = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        if sel.all() or not sel.any():
            continue
        sse = sum(((pts[s] - pts[s].mean(axis=0)) ** 2).sum() for s in (sel, ~sel))
        if sse < best[0]:
            best = (sse, sel)
    return best


def chord_distances(values):
    """Perpendicular distances to the first-last chord after scaling both axes to [0, 1]."""
    v = [float(x) for x in values]
    n = len(v)
    lo, hi = min(v), max(v)
    xs = [i / (n - 1) for i in range(n)]
    ys = [(x - lo) / (hi - lo) if hi > lo else 0.0 for x in v]
    x0, y0, x1, y1 = xs[0], ys[0], xs[-1], ys[-1]
    norm = math.hypot(x1 - x0, y1 - y0)
    return [abs((y1 - y0) * (x - x0) - (x1 - x0) * (y - y0)) / norm for x, y in zip(xs, ys)]


def balanced_accuracy(probs, labels, threshold):
    """Exact balanced accuracy (as a Fraction) of the rule ``p >= threshold``."""
    pos = [p for p, y in zip(probs, labels) if y == 1]
    neg = [p for p, y in zip(probs, labels) if y == 0]
    tpr = Fraction(sum(p >= threshold for p in pos), len(pos))
    tnr = Fraction(sum(p < threshold for p in neg), len(neg))
    return (tpr + tnr) / 2


def platt_soft_targets(labels):
    """Platt's out-of-sample targets (N+ + 1)/(N+ + 2) and 1/(N- + 2)."""
    n_pos = sum(1 for y in labels if y == 1)
    n_neg = len(labels) - n_pos
    return [(n_pos + 1.0) / (n_pos + 2.0) if y == 1 else 1.0 / (n_neg + 2.0) for y in labels]

"""Evaluation metrics and significance tests."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as _st
from scipy.stats import rankdata

from .exceptions import SingleClassError

THRESHOLD_GRID = np.arange(1, 1000) / 1000.0


def _binary_labels(labels):
    y = np.asarray(labels).astype(int).ravel()
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise SingleClassError("both classes must be present")
    return y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of the ROC AUC; tied scores count one half."""
    s = np.asarray(scores, dtype=float).ravel()
    y = _binary_labels(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels):
    """ROC curve vertices ``(thresholds, fpr, tpr)`` for descending thresholds."""
    s = np.asarray(scores, dtype=float).ravel()
    y = _binary_labels(labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), y.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    tpr = np.r_[0.0, tps / y.sum()]
    fpr = np.r_[0.0, fps / (y.size - y.sum())]
    thresholds = np.r_[np.inf, s[distinct]]
    return thresholds, fpr, tpr


def _signed_ranks(diffs):
    d = np.asarray(diffs, dtype=float).ravel()
    # Pratt: zeros take part in ranking, then are dropped
    ranks = rankdata(np.abs(d))
    keep = d != 0
    if not keep.any():
        raise ValueError("all differences are zero")
    return ranks[keep], d[keep] > 0


def _exact_null(ranks):
    sums = np.zeros(1)
    for r in ranks:
        sums = np.concatenate((sums, sums + r))
    return sums


def wilcoxon_signed_rank(diffs, alternative: str = "two-sided", exact_max_n: int = 12,
                         method: Optional[str] = None) -> float:
    """p-value of the Wilcoxon signed-rank test on paired differences.

    Parameters
    ----------
    diffs : array-like
        Paired differences; zeros are handled with Pratt's method.
    alternative : {"two-sided", "greater", "less"}
        "greater" tests whether the differences tend to be positive.
    exact_max_n : int
        Largest number of nonzero differences handled by full enumeration
        of sign assignments; larger samples use the normal approximation
        with continuity correction.
    method : {"exact", "approx"}, optional
        Force one of the two paths.
    """
    alternative = alternative.replace("_", "-")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    ranks, positive = _signed_ranks(diffs)
    t_plus = float(ranks[positive].sum())
    n = ranks.size
    if method is None:
        method = "exact" if n <= exact_max_n else "approx"
    if method == "exact":
        null = _exact_null(ranks)
        eps = 1e-9
        p_ge = float(np.mean(null >= t_plus - eps))
        p_le = float(np.mean(null <= t_plus + eps))
        if alternative == "greater":
            return p_ge
        if alternative == "less":
            return p_le
        return min(1.0, 2.0 * min(p_ge, p_le))
    mean = ranks.sum() / 2.0
    sd = np.sqrt(np.sum(ranks ** 2) / 4.0)
    if alternative == "greater":
        return float(_st.norm.sf((t_plus - mean - 0.5) / sd))
    if alternative == "less":
        return float(_st.norm.cdf((t_plus - mean + 0.5) / sd))
    z = max(abs(t_plus - mean) - 0.5, 0.0) / sd
    return float(min(1.0, 2.0 * _st.norm.sf(z)))


def benjamini_hochberg(p_values, alpha: float = 0.05) -> np.ndarray:
    """Step-up rejection flags, in the original order of ``p_values``."""
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("p_values must not be empty")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    passed = np.flatnonzero(p[order] <= alpha * np.arange(1, m + 1) / m)
    reject = np.zeros(m, dtype=bool)
    if passed.size:
        reject[order[: passed[-1] + 1]] = True
    return reject


@dataclass(frozen=True)
class NbTestResult:
    t_stat: float
    df: int
    p_value: float
    correction_factor: float
    mean_diff: float = 0.0
    degenerate: bool = False


def nadeau_bengio_test(diffs, n_train: float, n_test: float) -> NbTestResult:
    """Corrected resampled t-test on per-run score differences.

    The variance of the mean difference is inflated by
    ``1/J + n_test/n_train`` to account for overlapping training sets.
    """
    d = np.asarray(diffs, dtype=float).ravel()
    J = d.size
    if J < 2:
        raise ValueError("at least two differences are required")
    factor = 1.0 / J + float(n_test) / float(n_train)
    mean = float(d.mean())
    var = float(d.var(ddof=1))
    if var <= 0:
        p = 1.0 if mean == 0 else 0.0
        t = 0.0 if mean == 0 else float(np.sign(mean) * np.inf)
        return NbTestResult(t, J - 1, p, factor, mean, True)
    t = mean / np.sqrt(factor * var)
    p = float(2.0 * _st.t.sf(abs(t), df=J - 1))
    return NbTestResult(float(t), J - 1, min(1.0, p), factor, mean, False)


def _ba_counts(probabilities, labels, grid):
    """``(numerator, denominator)`` with balanced accuracy = num / den, in integers."""
    p = np.asarray(probabilities, dtype=float).ravel()
    y = _binary_labels(labels)
    pos = np.sort(p[y == 1])
    neg = np.sort(p[y == 0])
    # predictions are positive when p >= threshold
    tp = pos.size - np.searchsorted(pos, grid, side="left")
    tn = np.searchsorted(neg, grid, side="left")
    return tp * neg.size + tn * pos.size, 2 * pos.size * neg.size


def balanced_accuracy_grid(probabilities, labels, grid=THRESHOLD_GRID) -> np.ndarray:
    num, den = _ba_counts(probabilities, labels, grid)
    return num / den


def tune_threshold(probabilities, labels) -> float:
    """Lowest point of the 1/1000 grid maximizing balanced accuracy."""
    # integer numerators make ties exact
    num, _ = _ba_counts(probabilities, labels, THRESHOLD_GRID)
    return float(THRESHOLD_GRID[int(np.argmax(num))])


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    accuracy: float
    recall: float
    specificity: float
    n_pos: int
    n_neg: int
    threshold: float
    bootstrap_se: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"auc": self.auc, "accuracy": self.accuracy, "recall": self.recall,
                "specificity": self.specificity, "n_pos": self.n_pos, "n_neg": self.n_neg,
                "threshold": self.threshold, "bootstrap_se": dict(self.bootstrap_se)}


def _point_metrics(p, y, threshold):
    pred = p >= threshold
    pos = y == 1
    return {
        "auc": roc_auc(p, y),
        "accuracy": float(np.mean(pred == pos)),
        "recall": float(np.mean(pred[pos])),
        "specificity": float(np.mean(~pred[~pos])),
    }


def metrics_report(probabilities, labels, threshold: float, n_bootstrap: int = 1000,
                   seed: int = 0, positive_class: int = 1) -> MetricsReport:
    """AUC, accuracy, recall and specificity with bootstrap standard errors.

    ``probabilities`` are for ``positive_class``; recall is measured on that
    class and specificity on the other one.
    """
    p = np.asarray(probabilities, dtype=float).ravel()
    y = _binary_labels(labels)
    if positive_class == 0:
        y = 1 - y
    point = _point_metrics(p, y, threshold)
    se = {}
    if n_bootstrap:
        rng = np.random.default_rng(seed)
        draws = {k: [] for k in point}
        for _ in range(n_bootstrap):
            idx = rng.integers(0, y.size, y.size)
            yb = y[idx]
            if yb.min() == yb.max():
                continue
            for k, v in _point_metrics(p[idx], yb, threshold).items():
                draws[k].append(v)
        se = {k: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for k, v in draws.items()}
    return MetricsReport(point["auc"], point["accuracy"], point["recall"], point["specificity"],
                         int(y.sum()), int(y.size - y.sum()), float(threshold), se)


def compare_probability_distributions(h_failure_probs, nh_failure_probs, labels, history_flags) -> dict:
    """Paired one-sided comparisons of two models' outcome probabilities.

    Inputs are per-row failure probabilities of the history (H) and
    no-history (NH) models on the same test rows. Each row is scored with
    the probability its model gives to the realized outcome; within each
    stratum the test asks whether H's values are larger than NH's.
    """
    ph = np.asarray(h_failure_probs, dtype=float).ravel()
    pn = np.asarray(nh_failure_probs, dtype=float).ravel()
    y = np.asarray(labels).astype(int).ravel()
    hist = np.asarray(history_flags).astype(bool).ravel()
    if not (ph.size == pn.size == y.size == hist.size):
        raise ValueError("inputs must be aligned")
    real_h = np.where(y == 1, ph, 1.0 - ph)
    real_nh = np.where(y == 1, pn, 1.0 - pn)

    strata = {
        "successes": y == 0,
        "successes_with_history": (y == 0) & hist,
        "failures": y == 1,
        "failures_with_history": (y == 1) & hist,
    }
    tests = {}
    for name, mask in strata.items():
        if not mask.any():
            tests[name] = None
            continue
        diffs = real_h[mask] - real_nh[mask]
        if not np.any(diffs != 0):
            tests[name] = {"n": int(mask.sum()), "p_value": 1.0, "degenerate": True}
        else:
            tests[name] = {"n": int(mask.sum()),
                           "p_value": wilcoxon_signed_rank(diffs, "greater"),
                           "degenerate": False}

    def _cell(values):
        if values.size == 0:
            return None
        sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        return {"n": int(values.size), "mean": float(values.mean()), "sd": sd}

    summary = []
    for only_history in (True, False):
        for outcome, code in (("Successes", 0), ("Failures", 1)):
            mask = (y == code) & (hist if only_history else True)
            for model, values in (("H", real_h), ("NH", real_nh)):
                summary.append({"outcome": outcome, "model": model,
                                "only_with_history": only_history,
                                "stats": _cell(values[mask])})
    partition = {f"{o}_{'history' if h else 'no_history'}": int(np.sum((y == c) & (hist == h)))
                 for o, c in (("successes", 0), ("failures", 1)) for h in (True, False)}
    return {"tests": tests, "summary": summary, "partition_counts": partition}

"""Model selection and calibration around :class:`~retropredict.svm.LinearSVM`.

Labels follow the dataset convention ``1 = Failure``, ``0 = Success``;
inside the SVM failures are the +1 class, so larger decision values mean
a larger failure probability.
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from . import _jsonio
from .exceptions import SingleClassError
from .logistic import minimize_logistic_nll
from .stats import benjamini_hochberg, roc_auc, tune_threshold, wilcoxon_signed_rank
from .svm import LinearSVM

logger = logging.getLogger(__name__)

LOG_C_RANGE = (-14.0, 0.0)
PLATT_A_BOUNDS = (-1e6, 0.0)
PLATT_B_BOUNDS = (-1e6, 1e6)


def platt_targets(labels):
    y = np.asarray(labels).astype(int).ravel()
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("Platt calibration needs both classes")
    return np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))


class PlattCalibrator(BaseEstimator):
    """Sigmoid ``P(y=1 | d) = 1 / (1 + exp(A d + B))`` with Platt's smoothed targets.

    ``A`` is constrained to be non-positive; the unconstrained slope is kept
    in ``A_unconstrained_`` so an inverted label convention is visible.
    """

    def __init__(self, constrain_slope=True):
        self.constrain_slope = constrain_slope

    def fit(self, decisions, labels):
        d = np.asarray(decisions, dtype=float).ravel()
        t = platt_targets(labels)
        free = minimize_logistic_nll(d, t, (PLATT_B_BOUNDS, PLATT_B_BOUNDS))
        # minimize_logistic_nll models p = 1/(1+exp(a + b x)) as the probability of t=1,
        # so a is Platt's B and b is Platt's A
        self.A_unconstrained_ = free.b
        if self.A_unconstrained_ > 0:
            logger.warning("Platt slope is positive (%.4g): label orientation looks inverted",
                           self.A_unconstrained_)
        if self.constrain_slope and free.b > 0:
            fit = minimize_logistic_nll(d, t, (PLATT_B_BOUNDS, PLATT_A_BOUNDS))
        else:
            fit = free
        self.A_, self.B_ = fit.b, fit.a
        self.nll_ = fit.nll
        return self

    def predict_proba(self, decisions):
        check_is_fitted(self, "A_")
        z = self.A_ * np.asarray(decisions, dtype=float) + self.B_
        return 1.0 / (1.0 + np.exp(np.clip(z, -700, 700)))


def platt_calibrate(decisions, labels):
    cal = PlattCalibrator().fit(decisions, labels)
    return cal.A_, cal.B_


# --- patient-grouped folds ---------------------------------------------------

def grouped_kfold(groups, y, n_folds=5, seed=0, max_attempts=100):
    """Patient-grouped fold ids balancing row counts, resampled until every
    training and validation part contains both classes."""
    groups = np.asarray(groups)
    y = np.asarray(y).astype(int)
    patients, inverse, counts = np.unique(groups, return_inverse=True, return_counts=True)
    if len(patients) < n_folds:
        raise ValueError(f"{len(patients)} patients cannot fill {n_folds} folds")
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        order = rng.permutation(len(patients))
        load = np.zeros(n_folds)
        patient_fold = np.empty(len(patients), dtype=int)
        for p in order:
            f = int(np.argmin(load))
            patient_fold[p] = f
            load[f] += counts[p]
        fold = patient_fold[inverse]
        ok = True
        for f in range(n_folds):
            val = y[fold == f]
            fit = y[fold != f]
            if val.min() == val.max() or fit.min() == fit.max():
                ok = False
                break
        if ok:
            if attempt:
                logger.info("fold assignment resampled %d time(s) for seed %s", attempt, seed)
            return fold
    raise SingleClassError("could not build folds with both classes in every part")


def repeated_grouped_folds(groups, y, n_folds=5, n_repeats=5, seed=0):
    return [grouped_kfold(groups, y, n_folds, seed=seed * 7919 + r) for r in range(n_repeats)]


# --- random search -----------------------------------------------------------

@dataclass
class CvResult:
    candidate_C: float
    fold_scores: np.ndarray
    p_value: float = float("nan")
    rejected: bool = False

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.fold_scores))

    def to_dict(self):
        return {"C": self.candidate_C, "mean_auc": self.mean_auc,
                "fold_scores": [float(s) for s in self.fold_scores],
                "p_value_vs_best": self.p_value, "rejected": bool(self.rejected)}


def _fold_auc(X, y, fit_idx, val_idx, C, svm_params):
    model = LinearSVM(C=C, **svm_params).fit(X[fit_idx], y[fit_idx])
    return roc_auc(model.decision_function(X[val_idx]), y[val_idx])


def select_lowest_c(results, alpha=0.05):
    """Lowest C whose scores are not significantly below the best mean.

    Each non-best candidate is compared with the best one by a two-sided
    Wilcoxon signed-rank test on the paired fold scores; p-values are
    Benjamini-Hochberg corrected at ``alpha``.
    """
    best = max(range(len(results)), key=lambda i: (results[i].mean_auc, -results[i].candidate_C))
    others = [i for i in range(len(results)) if i != best]
    results[best].p_value = 1.0
    if others:
        pvals = []
        for i in others:
            diffs = results[best].fold_scores - results[i].fold_scores
            try:
                pvals.append(wilcoxon_signed_rank(diffs, "two-sided"))
            except ValueError:
                pvals.append(1.0)
        reject = benjamini_hochberg(pvals, alpha)
        for i, p, r in zip(others, pvals, reject):
            results[i].p_value = float(p)
            # only candidates below the best can be "significantly lower"
            results[i].rejected = bool(r and results[i].mean_auc < results[best].mean_auc)
    keep = [r for i, r in enumerate(results) if i == best or not r.rejected]
    return min(r.candidate_C for r in keep), best


def random_search_cv(X, y, groups, n_candidates=60, seed=0, n_folds=5, n_repeats=5,
                     alpha=0.05, n_jobs=1, svm_params=None):
    """Random search over ``ln C ~ U(-14, 0)`` with repeated grouped k-fold CV.

    Returns ``(selected_C, results)`` where ``results`` holds one
    :class:`CvResult` (``n_folds * n_repeats`` AUCs) per candidate.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    svm_params = dict(svm_params or {})
    rng = np.random.default_rng(seed)
    candidates = np.exp(rng.uniform(*LOG_C_RANGE, size=n_candidates))
    folds = repeated_grouped_folds(groups, y, n_folds, n_repeats, seed)
    tasks = [(c, fold == f) for c in range(n_candidates) for fold in folds for f in range(n_folds)]

    def run(task):
        c, val = task
        return _fold_auc(X, y, np.flatnonzero(~val), np.flatnonzero(val), candidates[c], svm_params)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            scores = list(pool.map(run, tasks))
    else:
        scores = [run(t) for t in tasks]
    per = n_folds * n_repeats
    results = [CvResult(float(candidates[c]), np.array(scores[c * per:(c + 1) * per]))
               for c in range(n_candidates)]
    selected, _ = select_lowest_c(results, alpha)
    return selected, results


# --- final model ---------------------------------------------------------------

class CalibratedLinearSVM(BaseEstimator, ClassifierMixin):
    """Linear SVM refit on all rows, Platt-calibrated on out-of-fold decisions.

    The decision threshold maximizes balanced accuracy of the out-of-fold
    failure probabilities on the 1/1000 grid.
    """

    def __init__(self, C=1.0, n_calibration_folds=5, random_state=0, svm_params=None):
        self.C = C
        self.n_calibration_folds = n_calibration_folds
        self.random_state = random_state
        self.svm_params = svm_params

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(int)
        if y.min() == y.max():
            raise SingleClassError("training data contains a single class")
        params = dict(self.svm_params or {})
        if groups is None:
            groups = np.arange(len(y))
        self.svm_ = LinearSVM(C=self.C, **params).fit(X, y)
        self.classes_ = self.svm_.classes_
        fold = grouped_kfold(groups, y, self.n_calibration_folds, seed=self.random_state + 104729)
        oof = np.empty(len(y))
        for f in range(self.n_calibration_folds):
            val = fold == f
            m = LinearSVM(C=self.C, **params).fit(X[~val], y[~val])
            oof[val] = m.decision_function(X[val])
        self.calibrator_ = PlattCalibrator().fit(oof, y)
        self.oof_decisions_ = oof
        self.threshold_ = tune_threshold(self.calibrator_.predict_proba(oof), y)
        return self

    @property
    def coef_(self):
        return self.svm_.coef_

    @property
    def intercept_(self):
        return self.svm_.intercept_

    def decision_function(self, X):
        check_is_fitted(self, "svm_")
        return self.svm_.decision_function(X)

    def predict_proba(self, X):
        p_fail = self.calibrator_.predict_proba(self.decision_function(X))
        return np.column_stack([1.0 - p_fail, p_fail])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= self.threshold_).astype(int)


class RandomSearchSVM(BaseEstimator, ClassifierMixin):
    """Random search for C followed by a calibrated refit at the selected C."""

    def __init__(self, n_candidates=60, n_folds=5, n_repeats=5, alpha=0.05,
                 random_state=0, n_jobs=1, svm_params=None):
        self.n_candidates = n_candidates
        self.n_folds = n_folds
        self.n_repeats = n_repeats
        self.alpha = alpha
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.svm_params = svm_params

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        if groups is None:
            groups = np.arange(len(y))
        self.selected_C_, self.cv_results_ = random_search_cv(
            X, y, groups, self.n_candidates, self.random_state, self.n_folds, self.n_repeats,
            self.alpha, self.n_jobs, self.svm_params)
        self.best_estimator_ = CalibratedLinearSVM(
            self.selected_C_, self.n_folds, self.random_state, self.svm_params).fit(X, y, groups)
        self.classes_ = self.best_estimator_.classes_
        return self

    def decision_function(self, X):
        return self.best_estimator_.decision_function(X)

    def predict_proba(self, X):
        return self.best_estimator_.predict_proba(X)

    def predict(self, X):
        return self.best_estimator_.predict(X)


def fit_final(X, y, groups, selected_C, seed=0, svm_params=None) -> CalibratedLinearSVM:
    return CalibratedLinearSVM(selected_C, 5, seed, svm_params).fit(X, y, groups)


# --- serialized model ----------------------------------------------------------

@dataclass
class SvmModel:
    """Serializable trained model."""

    w: np.ndarray
    b: float
    C: float
    platt_A: float
    platt_B: float
    threshold: float
    feature_names: list
    n_mutations: int
    config: dict = field(default_factory=dict)
    cv_results: list = field(default_factory=list)

    @classmethod
    def from_estimator(cls, est, feature_names, n_mutations, config=None, cv_results=None):
        inner = est.best_estimator_ if hasattr(est, "best_estimator_") else est
        return cls(np.asarray(inner.coef_, dtype=float).copy(), float(inner.intercept_), float(inner.C),
                   float(inner.calibrator_.A_), float(inner.calibrator_.B_), float(inner.threshold_),
                   list(feature_names), int(n_mutations), dict(config or {}),
                   [r.to_dict() for r in (cv_results or [])])

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.w + self.b

    def failure_probability(self, X):
        z = self.platt_A * self.decision_function(X) + self.platt_B
        return 1.0 / (1.0 + np.exp(np.clip(z, -700, 700)))

    def success_probability(self, X):
        return 1.0 - self.failure_probability(X)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(_jsonio.dumps(self.config).encode()).hexdigest()[:16]

    def to_dict(self):
        return {
            "w": {str(i): float(v) for i, v in enumerate(self.w) if v != 0.0},
            "b": self.b, "C": self.C,
            "platt": {"A": self.platt_A, "B": self.platt_B},
            "threshold": self.threshold,
            "feature_names": self.feature_names,
            "n_mutations": self.n_mutations,
            "config": self.config,
            "config_fingerprint": self.fingerprint,
            "cv_results": self.cv_results,
        }

    @classmethod
    def from_dict(cls, data):
        names = list(data["feature_names"])
        w = np.zeros(len(names))
        for i, v in data["w"].items():
            w[int(i)] = float(v)
        return cls(w, float(data["b"]), float(data["C"]), float(data["platt"]["A"]),
                   float(data["platt"]["B"]), float(data["threshold"]), names,
                   int(data["n_mutations"]), dict(data.get("config", {})), list(data.get("cv_results", [])))

    def save(self, path):
        _jsonio.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(_jsonio.load(path))

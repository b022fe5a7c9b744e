"""L2-regularized hinge-loss linear SVM trained by dual coordinate descent."""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy import sparse
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import SingleClassError


@njit(cache=True, nogil=True)
def _xorshift(state):
    x = state[0]
    x ^= (x << np.uint64(13))
    x ^= (x >> np.uint64(7))
    x ^= (x << np.uint64(17))
    state[0] = x
    return x


@njit(cache=True, nogil=True)
def _gradient(indptr, indices, data, w, y, i):
    g = 0.0
    for k in range(indptr[i], indptr[i + 1]):
        g += w[indices[k]] * data[k]
    return y[i] * g - 1.0


@njit(cache=True, nogil=True)
def _projected(g, a, C):
    if a <= 0.0:
        return g if g < 0.0 else 0.0
    if a >= C:
        return g if g > 0.0 else 0.0
    return g


@njit(cache=True, nogil=True)
def _dual_cd(indptr, indices, data, y, C, tol, max_epochs, seed, shrinking, alpha, w, dual_history):
    # rows are stored CSR; only nonzero entries are touched
    n = indptr.size - 1
    qii = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * data[k]
        qii[i] = s
    order = np.arange(n)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed) * np.uint64(2654435761) + np.uint64(88172645463325252)
    if state[0] == 0:
        state[0] = np.uint64(1)
    active = n
    pg_max_old, pg_min_old = np.inf, -np.inf
    epochs = 0
    while epochs < max_epochs:
        for i in range(active - 1, 0, -1):
            k = int(_xorshift(state) % np.uint64(i + 1))
            tmp = order[i]
            order[i] = order[k]
            order[k] = tmp
        pg_max, pg_min = -np.inf, np.inf
        s = 0
        while s < active:
            i = order[s]
            g = _gradient(indptr, indices, data, w, y, i)
            # variables stuck at a bound leave the active set for now
            if shrinking and ((alpha[i] <= 0.0 and g > pg_max_old) or (alpha[i] >= C and g < pg_min_old)):
                active -= 1
                order[s] = order[active]
                order[active] = i
                continue
            pg = _projected(g, alpha[i], C)
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0 and qii[i] > 0.0:
                old = alpha[i]
                new = old - g / qii[i]
                if new < 0.0:
                    new = 0.0
                elif new > C:
                    new = C
                alpha[i] = new
                delta = (new - old) * y[i]
                if delta != 0.0:
                    for k in range(indptr[i], indptr[i + 1]):
                        w[indices[k]] += delta * data[k]
            s += 1
        ww = 0.0
        for j in range(w.size):
            ww += w[j] * w[j]
        dual_history[epochs] = alpha.sum() - 0.5 * ww
        epochs += 1
        if max(pg_max, -pg_min) < tol:
            if active == n:
                break
            # converged on the active set: check everything again
            active = n
            pg_max_old, pg_min_old = np.inf, -np.inf
            continue
        pg_max_old = pg_max if pg_max > 0.0 else np.inf
        pg_min_old = pg_min if pg_min < 0.0 else -np.inf
    violation = 0.0
    for i in range(n):
        pg = abs(_projected(_gradient(indptr, indices, data, w, y, i), alpha[i], C))
        if pg > violation:
            violation = pg
    return epochs, violation


def dual_coordinate_descent(Z, y, C, tol=1e-6, max_epochs=2000, seed=0, shrinking=True):
    """Solve ``max_a sum(a) - 0.5 |sum_i a_i y_i z_i|^2`` s.t. ``0 <= a <= C``.

    With ``shrinking`` variables sitting at a bound with a gradient that
    keeps them there are skipped until the active set converges; a full
    pass then decides convergence. Returns
    ``(w, alpha, n_epochs, max_violation, dual_objective_per_epoch)`` where
    the violation is measured over all variables.
    """
    Z = sparse.csr_matrix(np.asarray(Z, dtype=np.float64))
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha = np.zeros(Z.shape[0])
    w = np.zeros(Z.shape[1])
    history = np.zeros(max_epochs)
    n_epochs, viol = _dual_cd(Z.indptr.astype(np.int64), Z.indices.astype(np.int64), Z.data, y, float(C),
                              float(tol), int(max_epochs), int(seed), bool(shrinking), alpha, w, history)
    return w, alpha, int(n_epochs), float(viol), history[:n_epochs].copy()


def primal_objective(w, Z, y, C) -> float:
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - y * (Z @ w)).sum())


def dual_objective(alpha, Z, y) -> float:
    w = (alpha * y) @ Z
    return float(alpha.sum() - 0.5 * w @ w)


class LinearSVM(BaseEstimator, ClassifierMixin):
    """Linear SVM (hinge loss) with the intercept as an extra regularized feature.

    Parameters
    ----------
    C : float
        Inverse regularization strength.
    tol : float
        Stop when the largest projected-gradient violation drops below it.
    max_iter : int
        Maximum number of epochs over the data.
    intercept_scaling : float
        Value of the constant feature appended for the intercept.
    random_state : int
        Seed of the coordinate order.
    shrinking : bool
        Skip variables settled at a bound until the active set converges.
    """

    def __init__(self, C=1.0, tol=1e-6, max_iter=2000, intercept_scaling=1.0, random_state=0, shrinking=True):
        self.C = C
        self.shrinking = shrinking
        self.tol = tol
        self.max_iter = max_iter
        self.intercept_scaling = intercept_scaling
        self.random_state = random_state

    def _augment(self, X):
        return np.hstack([X, np.full((X.shape[0], 1), float(self.intercept_scaling))])

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise SingleClassError("LinearSVM needs exactly two classes")
        if not self.C > 0:
            raise ValueError("C must be positive")
        signed = np.where(y == self.classes_[1], 1.0, -1.0)
        w, alpha, n_iter, viol, history = dual_coordinate_descent(
            self._augment(X), signed, self.C, self.tol, self.max_iter, self.random_state or 0,
            self.shrinking)
        self.coef_ = w[:-1].copy()
        self.intercept_ = float(w[-1] * self.intercept_scaling)
        self.dual_coef_ = alpha
        self.n_iter_ = n_iter
        self.max_violation_ = viol
        self.dual_objective_history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, self.classes_[1], self.classes_[0])

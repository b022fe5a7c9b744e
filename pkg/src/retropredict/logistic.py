"""Box-constrained maximum likelihood for one-dimensional logistic curves.

Both the mutation persistence curves and Platt calibration fit the model

    p(x) = 1 / (1 + exp(a + b * x))

to (possibly soft) targets ``t`` by minimizing the mean cross-entropy.
The solver is a projected Newton method with an Armijo line search along
the projection arc. ``x`` is rescaled to unit max-abs internally so the
Hessian stays well conditioned for inputs measured in days.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class LogisticFit:
    a: float
    b: float
    nll: float
    n_iter: int
    converged: bool


def logistic_nll(a, b, x, t) -> float:
    """Mean cross-entropy of ``1/(1+exp(a+bx))`` against targets ``t``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    z = a + b * x
    return float(np.mean(np.logaddexp(0.0, z) - (1.0 - t) * z))


def logistic_nll_grid(a_values, b_values, x, t) -> np.ndarray:
    """Vectorized NLL over a grid; result has shape ``(len(a), len(b))``."""
    a = np.asarray(a_values, dtype=float)[:, None, None]
    b = np.asarray(b_values, dtype=float)[None, :, None]
    x = np.asarray(x, dtype=float)[None, None, :]
    t = np.asarray(t, dtype=float)[None, None, :]
    z = a + b * x
    return np.mean(np.logaddexp(0.0, z) - (1.0 - t) * z, axis=2)


def _clip(theta, lo, hi):
    return np.minimum(np.maximum(theta, lo), hi)


def minimize_logistic_nll(x, t, bounds=((-np.inf, np.inf), (-np.inf, np.inf)),
                          x0=None, tol=1e-10, max_iter=500) -> LogisticFit:
    """Minimize the logistic NLL over ``(a, b)`` inside a box.

    Parameters
    ----------
    x : array-like of shape (n,)
        Inputs.
    t : array-like of shape (n,)
        Targets in [0, 1]; ``t=1`` means the event ``p(x)`` models occurred.
    bounds : ((a_lo, a_hi), (b_lo, b_hi))
        Box for the parameters, infinite entries allowed.
    x0 : (a, b), optional
        Starting point; defaults to the intercept-only solution.
    tol : float
        Stop once an iteration improves the NLL by less than this.
    max_iter : int
        Iteration cap.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    n = x.size
    scale = float(np.max(np.abs(x))) if n and np.max(np.abs(x)) > 0 else 1.0
    u = x / scale
    (a_lo, a_hi), (b_lo, b_hi) = bounds
    lo = np.array([a_lo, b_lo * scale], dtype=float)
    hi = np.array([a_hi, b_hi * scale], dtype=float)

    def f(theta):
        z = theta[0] + theta[1] * u
        return float(np.mean(np.logaddexp(0.0, z) - (1.0 - t) * z))

    if x0 is None:
        tbar = float(np.clip(np.mean(t), 1e-6, 1 - 1e-6))
        theta = np.array([np.log((1 - tbar) / tbar), 0.0])
    else:
        theta = np.array([x0[0], x0[1] * scale], dtype=float)
    theta = _clip(theta, lo, hi)
    fval = f(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = theta[0] + theta[1] * u
        s = expit(z)
        r = s - (1.0 - t)
        g = np.array([r.mean(), (r * u).mean()])
        w = s * (1.0 - s)
        H = np.array([[w.mean(), (w * u).mean()],
                      [(w * u).mean(), (w * u * u).mean()]])
        at_lo = (theta <= lo) & (g > 0)
        at_hi = (theta >= hi) & (g < 0)
        free = ~(at_lo | at_hi)
        pg = np.where(free, g, 0.0)
        if not free.any() or np.max(np.abs(pg)) < 1e-14:
            converged = True
            break
        d = np.zeros(2)
        Hf = H[np.ix_(free, free)]
        gf = g[free]
        damping = 1e-12 * max(1.0, float(np.trace(Hf)))
        while True:
            try:
                L = np.linalg.cholesky(Hf + damping * np.eye(Hf.shape[0]))
                d[free] = -np.linalg.solve(L.T, np.linalg.solve(L, gf))
                break
            except np.linalg.LinAlgError:
                damping *= 10.0
        if g @ d >= 0:
            d = -pg
        step = 1.0
        while True:
            trial = _clip(theta + step * d, lo, hi)
            ftrial = f(trial)
            if ftrial <= fval + 1e-4 * float(g @ (trial - theta)):
                break
            step *= 0.5
            if step < 1e-20:
                trial, ftrial = theta, fval
                break
        improvement = fval - ftrial
        theta, fval = trial, ftrial
        if improvement < tol:
            # confirm stationarity before stopping on a small improvement
            z = theta[0] + theta[1] * u
            r = expit(z) - (1.0 - t)
            g = np.array([r.mean(), (r * u).mean()])
            free = ~(((theta <= lo) & (g > 0)) | ((theta >= hi) & (g < 0)))
            if np.max(np.abs(np.where(free, g, 0.0))) < 1e-7 or improvement <= 0:
                converged = True
                break
    return LogisticFit(float(theta[0]), float(theta[1] / scale), fval, it, converged)

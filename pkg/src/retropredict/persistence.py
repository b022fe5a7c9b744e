"""Mutation persistence curves learned from periods without drug pressure.

For every drug class except NRTI, each mutation seen during an on-class
therapy is followed through the genotypes sampled after the class was
stopped. The presence/absence record is fitted with a decreasing sigmoid
``1 / (1 + exp(alpha + beta * days))`` and the fitted ``(alpha, beta)``
pairs of a class are clustered with k-means on z-scored axes.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _jsonio
from .domain import CLASS_GENE, DRUG_CLASSES, DrugClass, MutationId, parse_mutation, render_mutation
from .exceptions import ConfigurationError, DegenerateFit
from .logistic import minimize_logistic_nll

logger = logging.getLogger(__name__)

ALPHA_BOUNDS = (-20.0, 20.0)
BETA_BOUNDS = (0.0, 1.0)
FITTED_CLASSES = (DrugClass.PI, DrugClass.NNRTI, DrugClass.INI)
ALL_CLASSES = (DrugClass.PI, DrugClass.NRTI, DrugClass.NNRTI, DrugClass.INI)


class Provenance(str, Enum):
    FITTED = "Fitted"
    CLUSTER_CENTROID = "ClusterCentroid"
    HYPERPARAMETER = "Hyperparameter"


@dataclass(frozen=True)
class SigmoidParams:
    alpha: float
    beta: float
    provenance: Provenance = Provenance.FITTED

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("sigmoid parameters must be finite")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    def __call__(self, days):
        return 1.0 / (1.0 + np.exp(np.minimum(self.alpha + self.beta * np.asarray(days, dtype=float), 700.0)))


@dataclass(frozen=True)
class PersistenceObservations:
    """Pooled (days since class stop, presence bit) records for one mutation.

    Records from several patients are pooled, so ``x`` is non-decreasing
    rather than strictly increasing.
    """

    mutation: MutationId
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.x) != len(self.y) or len(self.x) < 1:
            raise ValueError("x and y must be non-empty and of equal length")


def mutation_class(mutation: MutationId, table=None) -> DrugClass:
    """Drug class whose pressure selects ``mutation``.

    PR maps to PI and IN to INI. RT mutations go to NRTI when the score
    table rates them at least as strongly against an NRTI as against any
    NNRTI (with a positive NRTI score); all other RT mutations go to NNRTI.
    """
    if mutation.gene == "PR":
        return DrugClass.PI
    if mutation.gene == "IN":
        return DrugClass.INI
    if table is not None:
        best = {DrugClass.NRTI: 0, DrugClass.NNRTI: 0}
        for drug, score in table.drugs_for(mutation).items():
            cls = DRUG_CLASSES[drug]
            if cls in best:
                best[cls] = max(best[cls], score)
        if best[DrugClass.NRTI] > 0 and best[DrugClass.NRTI] >= best[DrugClass.NNRTI]:
            return DrugClass.NRTI
    return DrugClass.NNRTI


def _on_class_periods(cohort, patient_id, cls):
    periods = []
    for t in cohort.patient_therapies(patient_id):
        if cls in t.classes:
            start, end = t.start_date, cohort.effective_end(t)
            if periods and start <= periods[-1][1] + 1:
                periods[-1][1] = max(periods[-1][1], end)
            else:
                periods.append([start, end])
    return periods


def extract_observations(cohort, cls: DrugClass, table=None) -> dict:
    """Collect persistence observations for mutations attributed to ``cls``.

    Returns a mapping ``MutationId -> PersistenceObservations``.
    """
    cls = DrugClass(cls)
    if cls is DrugClass.NRTI:
        raise ValueError("NRTI mutations have no off-class periods to learn from")
    gene = CLASS_GENE[cls]
    attribution = {}
    records = defaultdict(list)
    for pid in cohort.patients:
        periods = _on_class_periods(cohort, pid, cls)
        if not periods:
            continue
        grts = cohort.patient_genotypes(pid)
        last_event = cohort.last_event(pid)
        for i, (on_start, on_end) in enumerate(periods):
            off_end = periods[i + 1][0] if i + 1 < len(periods) else last_event + 1
            if off_end <= on_end + 1:
                continue
            present = set()
            for g in grts:
                if on_start <= g.sample_date <= on_end:
                    present.update(m for m in g.mutations if m.gene == gene)
            selected = []
            for m in present:
                if m not in attribution:
                    attribution[m] = mutation_class(m, table)
                if attribution[m] is cls:
                    selected.append(m)
            if not selected:
                continue
            for g in grts:
                if on_end < g.sample_date < off_end:
                    dx = g.sample_date - on_end
                    for m in selected:
                        records[m].append((dx, int(m in g.mutations)))
    out = {}
    for m in sorted(records):
        rec = sorted(records[m], key=lambda r: r[0])
        out[m] = PersistenceObservations(
            m, np.array([r[0] for r in rec], dtype=float), np.array([r[1] for r in rec], dtype=int))
    return out


class SigmoidPersistence(BaseEstimator):
    """Maximum-likelihood decreasing sigmoid for presence records.

    Parameters
    ----------
    alpha_bounds, beta_bounds : tuple of float
        Parameter box; ``beta >= 0`` keeps the curve non-increasing.
    tol : float
        NLL improvement below which the Newton iterations stop.
    max_iter : int
        Iteration cap.
    """

    def __init__(self, alpha_bounds=ALPHA_BOUNDS, beta_bounds=BETA_BOUNDS, tol=1e-10, max_iter=500):
        self.alpha_bounds = alpha_bounds
        self.beta_bounds = beta_bounds
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, x, y):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.size < 2:
            raise DegenerateFit("at least two observations are required")
        if y.min() == y.max():
            raise DegenerateFit("presence record contains a single class")
        # presence (y=1) is the event modelled by the decreasing curve
        res = minimize_logistic_nll(x, y, (self.alpha_bounds, self.beta_bounds),
                                    tol=self.tol, max_iter=self.max_iter)
        self.alpha_, self.beta_ = res.a, max(res.b, 0.0)
        self.nll_ = res.nll
        self.n_iter_ = res.n_iter
        return self

    def predict_proba(self, x):
        check_is_fitted(self, "alpha_")
        z = self.alpha_ + self.beta_ * np.asarray(x, dtype=float)
        return 1.0 / (1.0 + np.exp(np.minimum(z, 700.0)))


def fit_sigmoid(obs: PersistenceObservations) -> SigmoidParams:
    est = SigmoidPersistence().fit(obs.x, obs.y)
    return SigmoidParams(est.alpha_, est.beta_, Provenance.FITTED)


# --- clustering -------------------------------------------------------------

@dataclass(frozen=True)
class Standardization:
    mean: tuple
    scale: tuple

    def transform(self, points):
        return (np.asarray(points, dtype=float) - np.array(self.mean)) / np.array(self.scale)

    def inverse_transform(self, z):
        return np.asarray(z, dtype=float) * np.array(self.scale) + np.array(self.mean)


@dataclass(frozen=True)
class Clustering:
    centroids: np.ndarray  # original coordinates, shape (k, 2)
    labels: np.ndarray
    standardization: Standardization
    inertia: float  # within-cluster SSE in z-space
    inertia_history: tuple = ()


def _kmeans_pp(z, k, rng):
    n = len(z)
    centers = [z[rng.integers(n)]]
    d2 = np.sum((z - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(z[idx])
        d2 = np.minimum(d2, np.sum((z - z[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(z, centers, max_iter):
    history = []
    labels = None
    for _ in range(max_iter):
        dist = np.sum((z[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        for j in range(len(centers)):
            if not np.any(new_labels == j):
                # empty cluster: take the point farthest from its center
                far = int(np.argmax(dist[np.arange(len(z)), new_labels]))
                new_labels[far] = j
        centers = np.array([z[new_labels == j].mean(axis=0) for j in range(len(centers))])
        sse = float(np.sum((z - centers[new_labels]) ** 2))
        history.append(sse)
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
    return centers, new_labels, history


def cluster_params(points, k: int, seed: int = 0, n_init: int = 50, max_iter: int = 300) -> Clustering:
    """k-means (k-means++ seeding, best of ``n_init`` restarts) on z-scored points.

    Points are put in lexicographic order before seeding so the result does
    not depend on the input order.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    mean = pts.mean(axis=0)
    std = pts.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    stdz = Standardization(tuple(float(v) for v in mean), tuple(float(v) for v in scale))
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    z = stdz.transform(pts[order])
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, labels, history = _lloyd(z, _kmeans_pp(z, k, rng), max_iter)
        if best is None or history[-1] < best[2][-1] - 1e-12:
            best = (centers, labels, history)
    centers, labels, history = best
    # canonical cluster numbering: by centroid coordinates
    rank = np.lexsort((centers[:, 1], centers[:, 0]))
    relabel = np.empty(k, dtype=int)
    relabel[rank] = np.arange(k)
    centers = centers[rank]
    labels_sorted = relabel[labels]
    out_labels = np.empty(n, dtype=int)
    out_labels[order] = labels_sorted
    return Clustering(stdz.inverse_transform(centers), out_labels, stdz, history[-1], tuple(history))


# --- model ------------------------------------------------------------------

@dataclass
class ClassPersistence:
    k: int = 0
    params: dict = field(default_factory=dict)  # MutationId -> SigmoidParams
    centroids: list = field(default_factory=list)
    standardization: Optional[Standardization] = None
    fallback_range: Optional[tuple] = None  # (a_min, a_max, b_min, b_max)


@dataclass
class PersistenceModel:
    per_class: dict  # DrugClass -> ClassPersistence
    attribution: dict = field(default_factory=dict)  # MutationId -> DrugClass

    def params(self, mutation: MutationId) -> SigmoidParams:
        for cp in self.per_class.values():
            if mutation in cp.params:
                return cp.params[mutation]
        raise KeyError(f"no persistence parameters for {render_mutation(mutation)}")

    def __contains__(self, mutation):
        return any(mutation in cp.params for cp in self.per_class.values())

    def to_dict(self) -> dict:
        out = {}
        for cls in ALL_CLASSES:
            cp = self.per_class.get(cls)
            if cp is None:
                continue
            out[cls.value] = {
                "k": cp.k,
                "standardization": None if cp.standardization is None else {
                    "mean": list(cp.standardization.mean), "scale": list(cp.standardization.scale)},
                "centroids": [list(map(float, c)) for c in cp.centroids],
                "fallback_range": None if cp.fallback_range is None else list(cp.fallback_range),
                "mutations": {
                    render_mutation(m): {"alpha": p.alpha, "beta": p.beta, "provenance": p.provenance.value}
                    for m, p in sorted(cp.params.items())
                },
            }
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "PersistenceModel":
        per_class = {}
        attribution = {}
        for name, block in data.items():
            dc = DrugClass(name)
            std = block.get("standardization")
            params = {}
            for tok, p in block["mutations"].items():
                m = parse_mutation(tok)
                params[m] = SigmoidParams(float(p["alpha"]), float(p["beta"]), Provenance(p["provenance"]))
                attribution[m] = dc
            per_class[dc] = ClassPersistence(
                k=int(block["k"]), params=params,
                centroids=[tuple(c) for c in block["centroids"]],
                standardization=None if std is None else Standardization(tuple(std["mean"]), tuple(std["scale"])),
                fallback_range=None if block["fallback_range"] is None else tuple(block["fallback_range"]),
            )
        return cls(per_class, attribution)

    def save(self, path) -> None:
        _jsonio.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "PersistenceModel":
        return cls.from_dict(_jsonio.load(path))


def build_persistence_model(cohort, table=None, k_per_class=None, seed: int = 0,
                            use_centroids: bool = False, fallback_bounds=None) -> PersistenceModel:
    """Fit, cluster and complete persistence parameters for every cohort mutation.

    Parameters
    ----------
    cohort : Cohort
    table : StanfordScoreTable, optional
        Used to attribute RT mutations to NRTI or NNRTI.
    k_per_class : dict, optional
        Number of clusters per class (default 3, reduced when fewer curves fit).
    seed : int
        Seeds clustering and the uniform draws for unobserved mutations.
    use_centroids : bool
        Replace each fitted curve by its cluster centroid.
    fallback_bounds : dict or tuple, optional
        Explicit ``(a_min, a_max, b_min, b_max)`` per class (or for all classes)
        for mutations that cannot be fitted.
    """
    k_per_class = {DrugClass(k): v for k, v in (k_per_class or {}).items()}
    universe = cohort.mutation_universe()
    if not universe:
        raise ConfigurationError("cohort contains no genotyped mutations; persistence model undefined")
    if isinstance(fallback_bounds, (tuple, list)):
        fallback_bounds = {c: tuple(fallback_bounds) for c in ALL_CLASSES}
    fallback_bounds = {DrugClass(k): tuple(v) for k, v in (fallback_bounds or {}).items()}

    attribution = {m: mutation_class(m, table) for m in universe}
    rng = np.random.default_rng(seed)
    per_class = {c: ClassPersistence() for c in ALL_CLASSES}
    observed = {}

    for i, cls in enumerate(FITTED_CLASSES):
        cp = per_class[cls]
        obs = extract_observations(cohort, cls, table)
        observed[cls] = obs
        fitted = {}
        for m, o in obs.items():
            try:
                fitted[m] = fit_sigmoid(o)
            except DegenerateFit:
                continue
        if not fitted:
            continue
        points = np.array([[p.alpha, p.beta] for p in fitted.values()])
        cp.fallback_range = (float(points[:, 0].min()), float(points[:, 0].max()),
                             float(points[:, 1].min()), float(points[:, 1].max()))
        k = min(k_per_class.get(cls, 3), len(fitted))
        clus = cluster_params(points, k, seed=seed + 1000 * (i + 1))
        cp.k = k
        cp.centroids = [tuple(float(v) for v in c) for c in clus.centroids]
        cp.standardization = clus.standardization
        for (m, p), lab in zip(fitted.items(), clus.labels):
            if use_centroids:
                a, b = clus.centroids[lab]
                cp.params[m] = SigmoidParams(float(a), max(float(b), 0.0), Provenance.CLUSTER_CENTROID)
            else:
                cp.params[m] = p

    fitted_ranges = [cp.fallback_range for cp in per_class.values() if cp.fallback_range]
    pooled = None
    if fitted_ranges:
        arr = np.array(fitted_ranges)
        pooled = (float(arr[:, 0].min()), float(arr[:, 1].max()), float(arr[:, 2].min()), float(arr[:, 3].max()))

    for cls in ALL_CLASSES:
        cp = per_class[cls]
        if cls in fallback_bounds:
            cp.fallback_range = fallback_bounds[cls]
        elif cp.fallback_range is None and cls is DrugClass.NRTI:
            cp.fallback_range = pooled
        members = [m for m in universe if attribution[m] is cls and m not in cp.params]
        if not members:
            continue
        central = None
        if cp.centroids:
            zc = cp.standardization.transform(np.array(cp.centroids))
            central = cp.centroids[int(np.argmin(np.sum((zc - zc.mean(axis=0)) ** 2, axis=1)))]
        for m in members:
            if central is not None and m in observed.get(cls, {}):
                cp.params[m] = SigmoidParams(float(central[0]), max(float(central[1]), 0.0),
                                             Provenance.CLUSTER_CENTROID)
                continue
            if cp.fallback_range is None:
                raise ConfigurationError(
                    f"no fittable {cls.value} mutations: pass explicit fallback (alpha, beta) bounds")
            a_lo, a_hi, b_lo, b_hi = cp.fallback_range
            a, b = rng.uniform(a_lo, a_hi), rng.uniform(b_lo, b_hi)
            cp.params[m] = SigmoidParams(float(a), max(float(b), 0.0), Provenance.HYPERPARAMETER)
    return PersistenceModel(per_class, attribution)

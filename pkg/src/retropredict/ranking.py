"""Mutation importance: coefficient ranking, composite ranking and elbow cutoff."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import MutationId, render_mutation

WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class RankingEntry:
    mutation: MutationId
    coefficient: float
    neg_log_weight_sum: float
    coef_abs_z: float
    neg_log_weight_sum_z: float

    @property
    def ranking_value(self) -> float:
        return self.coef_abs_z * self.neg_log_weight_sum_z


def _mutation_coefficients(model, universe):
    w = np.asarray(model.w if hasattr(model, "w") else model.coef_, dtype=float)
    if len(w) < len(universe):
        raise ValueError("model has fewer coefficients than mutations")
    return w[: len(universe)]


def coefficient_ranking(model, universe: Sequence[MutationId]) -> list:
    """``(mutation, coefficient)`` by descending absolute coefficient; drug columns excluded."""
    coef = _mutation_coefficients(model, universe)
    order = sorted(range(len(universe)), key=lambda i: (-abs(coef[i]), universe[i]))
    return [(universe[i], float(coef[i])) for i in order]


def z_scale(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    sd = v.std()
    if v.size == 0 or sd == 0 or not np.isfinite(sd):
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def neg_log_weight_sums(weight_records, universe, n_rows=None) -> dict:
    """``L_m = -sum log clamp(|w|, 1e-6, 1)`` over the recorded occurrences.

    With ``n_rows`` given, rows where the mutation is absent count as
    weight zero (summation over all rows instead of occurrences).
    """
    sums = defaultdict(float)
    counts = defaultdict(int)
    for rec in weight_records:
        w = min(1.0, max(WEIGHT_FLOOR, abs(rec.weight)))
        sums[rec.mutation] -= math.log(w)
        counts[rec.mutation] += 1
    if n_rows is not None:
        floor_term = -math.log(WEIGHT_FLOOR)
        for m in universe:
            sums[m] += (n_rows - counts[m]) * floor_term
    return {m: sums.get(m, 0.0) for m in universe}


def composite_ranking(model, universe: Sequence[MutationId], weight_records,
                      sum_over_all_rows: bool = False, n_rows=None) -> list:
    """Rank mutations by ``z(|coef|) * z(L)``, descending."""
    if not weight_records:
        raise ValueError("composite ranking needs the weights of a Weighted training set")
    coef = _mutation_coefficients(model, universe)
    if sum_over_all_rows:
        if n_rows is None:
            n_rows = len({r.therapy_id for r in weight_records})
    else:
        n_rows = None
    L = neg_log_weight_sums(weight_records, universe, n_rows)
    L_vec = np.array([L[m] for m in universe])
    cz = z_scale(np.abs(coef))
    lz = z_scale(L_vec)
    entries = [RankingEntry(m, float(coef[i]), float(L_vec[i]), float(cz[i]), float(lz[i]))
               for i, m in enumerate(universe)]
    return sorted(entries, key=lambda e: (-e.ranking_value, -abs(e.coefficient), e.mutation))


def elbow_select(sorted_values) -> int:
    """Index of the point farthest from the chord joining the first and last point.

    Both axes are scaled to [0, 1] first; ties go to the earliest index.
    """
    v = np.asarray(sorted_values, dtype=float)
    n = v.size
    if n < 3:
        raise ValueError("elbow selection needs at least three values")
    x = np.arange(n) / (n - 1)
    span = v.max() - v.min()
    y = (v - v.min()) / span if span > 0 else np.zeros(n)
    dx, dy = x[-1] - x[0], y[-1] - y[0]
    dist = np.abs(dy * (x - x[0]) - dx * (y - y[0])) / math.hypot(dx, dy)
    # guard against rounding noise deciding ties
    best = dist.max()
    return int(np.flatnonzero(dist >= best - 1e-12)[0])


def write_ranking(entries, cutoff, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rank\tmutation\tcoefficient\tL\tcoef_abs_z\tL_z\tranking_value\tselected\n")
        for i, e in enumerate(entries):
            fh.write(f"{i + 1}\t{render_mutation(e.mutation)}\t{e.coefficient:.17g}\t"
                     f"{e.neg_log_weight_sum:.17g}\t{e.coef_abs_z:.17g}\t{e.neg_log_weight_sum_z:.17g}\t"
                     f"{e.ranking_value:.17g}\t{int(i <= cutoff)}\n")


def write_scree(values, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rank\tvalue\n")
        for i, v in enumerate(values):
            fh.write(f"{i + 1}\t{float(v):.17g}\n")

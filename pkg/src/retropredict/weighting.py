"""Per-occurrence mutation weights.

A mutation seen in a patient's genotype before a target therapy gets

    w = area / (1 + exp(alpha + beta * t) - tanh(S))

clamped to [-1, 1], where ``area`` is the normalized area under the
log10 viral-load curve around the genotype date, ``t`` the days between
that genotype and the therapy start, ``(alpha, beta)`` the mutation's
persistence curve and ``S`` the normalized minimum resistance score of the
mutation against the regimen.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .domain import CLASS_GENE, DRUG_CLASSES, MutationId
from .exceptions import DegenerateDenominator
from .ingest import SCALE_NORM, StanfordScoreTable

SUPPRESSION_LOG = math.log10(50.0)
HALF_WINDOW_DAYS = 30


def vl_area(dates, copies, grt_date: int, half_window: int = HALF_WINDOW_DAYS) -> float:
    """Integral of ``log10(VL) - log10(50)`` over ``grt_date +/- half_window`` days.

    The curve is the piecewise-linear interpolant of the measurements,
    held constant beyond the first and last one.
    """
    dates = np.asarray(dates, dtype=float)
    if dates.size == 0 or not (dates.min() < grt_date < dates.max()):
        raise ValueError("viral loads must exist on both sides of the genotype date")
    values = np.log10(np.asarray(copies, dtype=float)) - SUPPRESSION_LOG
    lo, hi = grt_date - half_window, grt_date + half_window
    inner = dates[(dates > lo) & (dates < hi)]
    knots = np.concatenate(([lo], inner, [hi]))
    curve = np.interp(knots, dates, values)
    return float(np.sum(np.diff(knots) * (curve[1:] + curve[:-1]) / 2.0))


def fit_area_scales(raw: Mapping) -> dict:
    """Per-mutation max-abs scale over ``{(mutation, occurrence): area}``."""
    scales = defaultdict(float)
    for (mutation, _), area in raw.items():
        scales[mutation] = max(scales[mutation], abs(area))
    return {m: (s if s > 0 else 1.0) for m, s in scales.items()}


def normalize_areas(raw: Mapping, scales: Mapping = None):
    """Scale raw areas to [-1, 1].

    Without ``scales`` the scales are learned from ``raw`` itself (the
    training occurrences); given scales are reused as-is and values falling
    outside [-1, 1] are clamped. Returns ``(normalized, scales)``.
    """
    if scales is None:
        scales = fit_area_scales(raw)
    out = {}
    for key, area in raw.items():
        scale = scales.get(key[0], 1.0)
        out[key] = min(1.0, max(-1.0, area / scale))
    return out, dict(scales)


def stanford_component(mutation: MutationId, regimen: Iterable[str], table: StanfordScoreTable,
                       min_over_same_gene_class_only: bool = False) -> float:
    """Minimum score over the regimen drugs divided by the canonical-scale norm."""
    drugs = list(regimen)
    if not drugs:
        raise ValueError("regimen must not be empty")
    if min_over_same_gene_class_only:
        drugs = [d for d in drugs if CLASS_GENE[DRUG_CLASSES[d]] == mutation.gene]
        if not drugs:
            return 0.0
    return min(table.score(mutation, d) for d in drugs) / SCALE_NORM


@dataclass(frozen=True)
class MutationWeight:
    value: float
    area: float
    sigmoid_term: float
    stanford_term: float
    t_days: int


def mutation_weight(params, t_days: int, area_normalized: float, stanford: float) -> MutationWeight:
    if t_days < 0:
        raise ValueError("t_days must be non-negative")
    exponent = params.alpha + params.beta * t_days
    sigmoid_term = math.exp(min(exponent, 700.0))
    stanford_term = math.tanh(stanford)
    denominator = 1.0 + sigmoid_term - stanford_term
    if denominator <= 1e-12:
        raise DegenerateDenominator(f"weight denominator {denominator!r} is not positive")
    value = min(1.0, max(-1.0, area_normalized / denominator))
    return MutationWeight(value, area_normalized, sigmoid_term, stanford_term, int(t_days))

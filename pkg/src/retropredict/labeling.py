"""Standard Datum outcome labeling.

Durations are measured in whole days from the therapy start; a week is a
7-day block. Buckets partition the duration axis as
``(0, 4w]`` excluded, ``(4w, 8w]`` one-log rule, ``(8w, 20w)`` two-log rule
and ``[20w, inf)`` (or no end date) the 20-28 week window rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .domain import Outcome, Therapy, ViralLoadMeasurement

WEEK = 7
SUPPRESSION_THRESHOLD = 50.0
BASELINE_LOOKBACK_DAYS = 90
_LOG_EPS = 1e-12


class Rule(str, Enum):
    WINDOW_20_TO_28 = "Window20to28"
    STOP_4_TO_8 = "Stop4to8"
    STOP_8_TO_20 = "Stop8to20"
    STOP_UNDER_4 = "StopUnder4"


@dataclass(frozen=True)
class OutcomeLabel:
    value: Outcome
    rule_fired: Optional[Rule]
    deciding_vl: Optional[tuple] = None  # (date, copies_per_ml)
    reason: str = ""

    @property
    def y(self) -> Optional[int]:
        if self.value is Outcome.EXCLUDED:
            return None
        return int(self.value is Outcome.FAILURE)


def duration_bucket(duration_days: Optional[int]) -> Rule:
    if duration_days is None or duration_days >= 20 * WEEK:
        return Rule.WINDOW_20_TO_28
    if duration_days <= 4 * WEEK:
        return Rule.STOP_UNDER_4
    if duration_days <= 8 * WEEK:
        return Rule.STOP_4_TO_8
    return Rule.STOP_8_TO_20


def baseline_vl(therapy: Therapy, vls: Sequence[ViralLoadMeasurement]):
    """Most recent VL in ``[start - 90d, start]``, or None."""
    lo = therapy.start_date - BASELINE_LOOKBACK_DAYS
    candidates = [v for v in vls if lo <= v.date <= therapy.start_date]
    return candidates[-1] if candidates else None


def label_therapy(therapy: Therapy, vls: Sequence[ViralLoadMeasurement]) -> OutcomeLabel:
    """Map a therapy and its patient's date-sorted VL series to an outcome."""
    start = therapy.start_date
    duration = None if therapy.end_date is None else therapy.end_date - start
    rule = duration_bucket(duration)

    if rule is Rule.STOP_UNDER_4:
        return OutcomeLabel(Outcome.EXCLUDED, rule, reason="StopUnder4")

    if rule is Rule.WINDOW_20_TO_28:
        lo, hi, target = start + 20 * WEEK, start + 28 * WEEK, start + 24 * WEEK
        window = [v for v in vls if lo <= v.date <= hi]
        if not window:
            return OutcomeLabel(Outcome.EXCLUDED, None, reason="NoFollowUpVL")
        # min() keeps the first of equal keys, i.e. the earlier VL on ties
        chosen = min(window, key=lambda v: abs(v.date - target))
        value = Outcome.SUCCESS if chosen.copies_per_ml < SUPPRESSION_THRESHOLD else Outcome.FAILURE
        return OutcomeLabel(value, rule, (chosen.date, chosen.copies_per_ml))

    on_therapy = [v for v in vls if start <= v.date <= therapy.end_date]
    if not on_therapy:
        return OutcomeLabel(Outcome.EXCLUDED, None, reason="NoOnTherapyVL")
    last = on_therapy[-1]
    required_drop = 1.0 if rule is Rule.STOP_4_TO_8 else 2.0
    success = last.copies_per_ml < SUPPRESSION_THRESHOLD
    base = baseline_vl(therapy, vls)
    if not success and base is not None:
        drop = math.log10(base.copies_per_ml) - math.log10(last.copies_per_ml)
        success = drop >= required_drop - _LOG_EPS
    value = Outcome.SUCCESS if success else Outcome.FAILURE
    return OutcomeLabel(value, rule, (last.date, last.copies_per_ml))

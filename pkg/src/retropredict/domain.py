"""Shared vocabulary: mutations, drugs, therapies, measurements.

Calendar days are plain ``int`` day counts from 1970-01-01 so that all date
arithmetic is whole-day integer arithmetic.
"""
from __future__ import annotations

import datetime as _dt
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import total_ordering
from typing import Mapping, Optional

from .exceptions import MalformedMutation, UnknownDrug, UnknownGene

GENES = ("PR", "RT", "IN")

_EPOCH = _dt.date(1970, 1, 1).toordinal()


class DrugClass(str, Enum):
    PI = "PI"
    NRTI = "NRTI"
    NNRTI = "NNRTI"
    INI = "INI"


DRUG_CLASSES: dict[str, DrugClass] = {
    # NRTI
    "3TC": DrugClass.NRTI, "ABC": DrugClass.NRTI, "AZT": DrugClass.NRTI,
    "D4T": DrugClass.NRTI, "DDC": DrugClass.NRTI, "DDI": DrugClass.NRTI,
    "FTC": DrugClass.NRTI, "TAF": DrugClass.NRTI, "TDF": DrugClass.NRTI,
    # NNRTI
    "DLV": DrugClass.NNRTI, "DOR": DrugClass.NNRTI, "EFV": DrugClass.NNRTI,
    "ETR": DrugClass.NNRTI, "NVP": DrugClass.NNRTI, "RPV": DrugClass.NNRTI,
    # PI
    "APV": DrugClass.PI, "ATV": DrugClass.PI, "DRV": DrugClass.PI,
    "FPV": DrugClass.PI, "IDV": DrugClass.PI, "LPV": DrugClass.PI,
    "NFV": DrugClass.PI, "SQV": DrugClass.PI, "TPV": DrugClass.PI,
    # INI
    "BIC": DrugClass.INI, "CAB": DrugClass.INI, "DTG": DrugClass.INI,
    "EVG": DrugClass.INI, "RAL": DrugClass.INI,
}

#: Fixed drug order used for indicator columns.
DRUG_CODES: tuple[str, ...] = tuple(sorted(DRUG_CLASSES))

#: Gene targeted by each drug class.
CLASS_GENE: dict[DrugClass, str] = {
    DrugClass.PI: "PR",
    DrugClass.NRTI: "RT",
    DrugClass.NNRTI: "RT",
    DrugClass.INI: "IN",
}


def drug_class(code: str) -> DrugClass:
    try:
        return DRUG_CLASSES[code]
    except KeyError:
        raise UnknownDrug(f"unknown drug code {code!r}") from None


def check_drug(code: str) -> str:
    drug_class(code)
    return code


@total_ordering
@dataclass(frozen=True)
class MutationId:
    """Amino-acid substitution identified by gene, position and new residue.

    The wild-type letter is not part of the identity: ``RTM184V`` and
    ``RT184V`` are the same mutation.
    """

    gene: str
    position: int
    amino_acid: str

    def __post_init__(self):
        if self.gene not in GENES:
            raise UnknownGene(f"unknown gene {self.gene!r}")
        if not isinstance(self.position, int) or self.position <= 0:
            raise MalformedMutation(f"position must be a positive integer, got {self.position!r}")
        if len(self.amino_acid) != 1 or not ("A" <= self.amino_acid <= "Z"):
            raise MalformedMutation(f"amino acid must be one uppercase letter, got {self.amino_acid!r}")

    def _key(self):
        return (GENES.index(self.gene), self.position, self.amino_acid)

    def __lt__(self, other):
        if not isinstance(other, MutationId):
            return NotImplemented
        return self._key() < other._key()

    def __str__(self):
        return render_mutation(self)


_TOKEN = re.compile(r"^([A-Z]{2})([A-Z]?)(\d+)([A-Z])$")


def parse_mutation(token: str) -> MutationId:
    """Parse ``<GENE><ref?><position><aa>`` into a :class:`MutationId`.

    Insertions, deletions and mixtures are rejected.
    """
    token = token.strip()
    match = _TOKEN.match(token)
    if match is None:
        if token[:2] not in GENES and re.match(r"^[A-Z]{2}[A-Z]?\d", token):
            raise UnknownGene(f"unknown gene in mutation token {token!r}")
        raise MalformedMutation(f"malformed mutation token {token!r}")
    gene, _ref, pos, aa = match.groups()
    if gene not in GENES:
        raise UnknownGene(f"unknown gene in mutation token {token!r}")
    position = int(pos)
    if position <= 0:
        raise MalformedMutation(f"non-positive position in {token!r}")
    return MutationId(gene, position, aa)


def render_mutation(m: MutationId) -> str:
    return f"{m.gene}{m.position}{m.amino_acid}"


def to_day(value: "str | _dt.date") -> int:
    if isinstance(value, str):
        value = _dt.date.fromisoformat(value.strip())
    return value.toordinal() - _EPOCH


def from_day(day: int) -> str:
    return _dt.date.fromordinal(day + _EPOCH).isoformat()


@dataclass(frozen=True)
class Therapy:
    patient_id: str
    therapy_id: str
    start_date: int
    end_date: Optional[int]
    drugs: frozenset

    def __post_init__(self):
        drugs = frozenset(check_drug(d) for d in self.drugs)
        if not drugs:
            raise ValueError(f"therapy {self.therapy_id} has no drugs")
        object.__setattr__(self, "drugs", drugs)
        if self.end_date is not None and self.end_date < self.start_date:
            raise ValueError(f"therapy {self.therapy_id} ends before it starts")

    @property
    def classes(self) -> frozenset:
        return frozenset(DRUG_CLASSES[d] for d in self.drugs)


@dataclass(frozen=True)
class GenotypeTest:
    patient_id: str
    sample_date: int
    mutations: frozenset = frozenset()


@dataclass(frozen=True)
class ViralLoadMeasurement:
    patient_id: str
    date: int
    copies_per_ml: float

    def __post_init__(self):
        if not self.copies_per_ml > 0:
            raise ValueError("copies_per_ml must be positive")


class Outcome(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    EXCLUDED = "Excluded"


@dataclass(frozen=True)
class PatientTherapyPair:
    """A therapy together with the genotype information available at its start."""

    therapy: Therapy
    history_mutations: Mapping[MutationId, int]
    baseline_mutations: frozenset
    baseline_date: int
    label: Outcome
    has_prior_history: bool
    grt_dates: tuple = field(default=())

    @property
    def y(self) -> int:
        return int(self.label is Outcome.FAILURE)

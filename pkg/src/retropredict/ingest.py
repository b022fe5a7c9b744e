"""Cohort and Stanford score table ingestion.

Files are tab-separated, UTF-8, with a header row; lines starting with ``#``
are skipped. See the README for the column layout of each file.
"""
from __future__ import annotations

import logging
import math
from bisect import bisect_left, bisect_right
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

from .domain import (
    DRUG_CLASSES,
    GenotypeTest,
    MutationId,
    Outcome,
    Therapy,
    ViralLoadMeasurement,
    from_day,
    parse_mutation,
    render_mutation,
    to_day,
)
from .exceptions import (
    DataError,
    DuplicateRecord,
    MalformedRecord,
    OffScaleScore,
    ReferentialIntegrity,
    UnknownDrug,
)

logger = logging.getLogger(__name__)

CANONICAL_SCALE = (-15, -10, -5, 0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60)
SCALE_NORM = math.sqrt(sum(s * s for s in CANONICAL_SCALE))

COHORT_FILES = {
    "therapies": "therapies.tsv",
    "genotypes": "genotypes.tsv",
    "viral_loads": "viral_loads.tsv",
    "patients": "patients.tsv",
}

DEFAULT_VL_FLOOR = 20.0


def read_tsv(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, row)`` for each data row of a TSV file."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [(i, line) for i, line in enumerate(fh, start=1)
                 if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise MalformedRecord(f"{path}: header row required")
    header = lines[0][1].rstrip("\r\n").split("\t")
    for lineno, line in lines[1:]:
        values = line.rstrip("\r\n").split("\t")
        if len(values) < len(header):
            values += [""] * (len(header) - len(values))
        yield lineno, dict(zip(header, values))


def _require(row, columns, where):
    missing = [c for c in columns if c not in row]
    if missing:
        raise MalformedRecord(f"{where}: missing column(s) {', '.join(missing)}")


@dataclass(frozen=True)
class StanfordScoreTable:
    """(mutation, drug) -> penalty score; absent pairs score 0."""

    scores: Mapping = field(default_factory=dict)
    canonical_scale: tuple = CANONICAL_SCALE

    def score(self, mutation: MutationId, drug: str) -> int:
        return self.scores.get((mutation, drug), 0)

    def drugs_for(self, mutation: MutationId) -> dict:
        return {d: s for (m, d), s in self.scores.items() if m == mutation}

    @property
    def norm(self) -> float:
        return math.sqrt(sum(s * s for s in self.canonical_scale))


def load_stanford_table(path) -> StanfordScoreTable:
    scores: dict = {}
    allowed = set(CANONICAL_SCALE)
    for lineno, row in read_tsv(path):
        where = f"{path}:{lineno}"
        _require(row, ("mutation", "drug", "score"), where)
        try:
            mutation = parse_mutation(row["mutation"])
        except DataError as exc:
            raise type(exc)(f"{where}: {exc}") from None
        drug = row["drug"].strip()
        if drug not in DRUG_CLASSES:
            raise UnknownDrug(f"{where}: unknown drug code {drug!r}")
        try:
            value = float(row["score"])
        except ValueError:
            raise MalformedRecord(f"{where}: score {row['score']!r} is not a number") from None
        if value != int(value) or int(value) not in allowed:
            raise OffScaleScore(f"{where}: score {row['score']} is not on the canonical scale")
        value = int(value)
        key = (mutation, drug)
        if key in scores and scores[key] != value:
            raise DuplicateRecord(f"{where}: conflicting score for {row['mutation']}/{drug}")
        scores[key] = value
    return StanfordScoreTable(scores)


def write_stanford_table(table: StanfordScoreTable, path) -> None:
    rows = sorted(table.scores.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("mutation\tdrug\tscore\n")
        for (m, d), s in rows:
            fh.write(f"{render_mutation(m)}\t{d}\t{s}\n")


@dataclass
class IngestReport:
    vl_clamped: int = 0
    merged_genotypes: int = 0
    merged_viral_loads: int = 0


@dataclass(frozen=True)
class Cohort:
    """Immutable, per-patient indexed store of the clinical records."""

    patients: tuple
    therapies: tuple
    genotypes: Mapping  # patient_id -> tuple[GenotypeTest] sorted by date
    viral_loads: Mapping  # patient_id -> tuple[ViralLoadMeasurement] sorted by date
    report: IngestReport = field(default_factory=IngestReport, compare=False)

    def __post_init__(self):
        by_patient = defaultdict(list)
        for t in self.therapies:
            by_patient[t.patient_id].append(t)
        index = {p: tuple(sorted(ts, key=lambda t: (t.start_date, t.therapy_id)))
                 for p, ts in by_patient.items()}
        object.__setattr__(self, "_therapies_by_patient", index)
        object.__setattr__(
            self, "_vl_dates",
            {p: [v.date for v in vls] for p, vls in self.viral_loads.items()})

    def patient_therapies(self, patient_id) -> tuple:
        return self._therapies_by_patient.get(patient_id, ())

    def patient_genotypes(self, patient_id) -> tuple:
        return self.genotypes.get(patient_id, ())

    def patient_viral_loads(self, patient_id) -> tuple:
        return self.viral_loads.get(patient_id, ())

    def vl_dates(self, patient_id) -> list:
        return self._vl_dates.get(patient_id, [])

    def last_event(self, patient_id) -> int:
        dates = [g.sample_date for g in self.patient_genotypes(patient_id)]
        dates += self.vl_dates(patient_id)
        for t in self.patient_therapies(patient_id):
            dates.append(t.start_date if t.end_date is None else t.end_date)
        return max(dates) if dates else 0

    def effective_end(self, therapy: Therapy) -> int:
        """End date, or (for ongoing therapies) next therapy start / last patient event."""
        if therapy.end_date is not None:
            return therapy.end_date
        later = [t.start_date for t in self.patient_therapies(therapy.patient_id)
                 if t.start_date > therapy.start_date]
        if later:
            return min(later)
        return max(self.last_event(therapy.patient_id), therapy.start_date)

    def mutation_universe(self) -> list:
        seen = set()
        for gts in self.genotypes.values():
            for g in gts:
                seen.update(g.mutations)
        return sorted(seen)


def build_cohort(patients: Iterable[str], therapies: Iterable[Therapy],
                 genotypes: Iterable[GenotypeTest],
                 viral_loads: Iterable[ViralLoadMeasurement],
                 report: Optional[IngestReport] = None) -> Cohort:
    """Assemble a Cohort from records, merging same-day duplicates.

    Same-day genotypes are merged by mutation-set union, same-day viral loads
    by geometric mean.
    """
    report = report or IngestReport()
    patients = tuple(sorted(set(patients)))
    known = set(patients)
    therapies = tuple(sorted(therapies, key=lambda t: (t.patient_id, t.start_date, t.therapy_id)))
    seen_ids = set()
    for t in therapies:
        if t.patient_id not in known:
            raise ReferentialIntegrity(f"therapy {t.therapy_id}: unknown patient {t.patient_id!r}")
        if t.therapy_id in seen_ids:
            raise DuplicateRecord(f"duplicate therapy_id {t.therapy_id!r}")
        seen_ids.add(t.therapy_id)

    grt = defaultdict(dict)
    for g in genotypes:
        if g.patient_id not in known:
            raise ReferentialIntegrity(f"genotype: unknown patient {g.patient_id!r}")
        slot = grt[g.patient_id]
        if g.sample_date in slot:
            report.merged_genotypes += 1
            slot[g.sample_date] = slot[g.sample_date] | frozenset(g.mutations)
        else:
            slot[g.sample_date] = frozenset(g.mutations)
    vls = defaultdict(lambda: defaultdict(list))
    for v in viral_loads:
        if v.patient_id not in known:
            raise ReferentialIntegrity(f"viral load: unknown patient {v.patient_id!r}")
        vls[v.patient_id][v.date].append(v.copies_per_ml)

    genotype_index = {
        p: tuple(GenotypeTest(p, d, muts) for d, muts in sorted(slot.items()))
        for p, slot in sorted(grt.items())
    }
    vl_index = {}
    for p, slot in sorted(vls.items()):
        series = []
        for d, values in sorted(slot.items()):
            if len(values) > 1:
                report.merged_viral_loads += 1
                value = 10 ** (sum(math.log10(x) for x in values) / len(values))
            else:
                value = values[0]
            series.append(ViralLoadMeasurement(p, d, value))
        vl_index[p] = tuple(series)
    return Cohort(patients, therapies, genotype_index, vl_index, report)


def _parse_day(text, where, column):
    try:
        return to_day(text)
    except ValueError:
        raise MalformedRecord(f"{where}: bad {column} {text!r}") from None


def load_cohort(directory=None, *, therapies=None, genotypes=None, viral_loads=None,
                patients=None, vl_floor: float = DEFAULT_VL_FLOOR) -> Cohort:
    """Read the four cohort TSVs into a validated :class:`Cohort`.

    Either pass the directory holding the default file names or explicit
    paths. Viral loads below ``vl_floor`` are clamped to it.
    """
    given = {"therapies": therapies, "genotypes": genotypes,
             "viral_loads": viral_loads, "patients": patients}
    paths = {}
    for key, name in COHORT_FILES.items():
        explicit = given[key]
        if explicit is not None:
            paths[key] = Path(explicit)
        elif directory is not None:
            paths[key] = Path(directory) / name
        else:
            raise DataError(f"no path given for {key}")
    report = IngestReport()

    patient_ids = []
    for lineno, row in read_tsv(paths["patients"]):
        _require(row, ("patient_id",), f"{paths['patients']}:{lineno}")
        pid = row["patient_id"].strip()
        if not pid:
            raise MalformedRecord(f"{paths['patients']}:{lineno}: empty patient_id")
        patient_ids.append(pid)
    known = set(patient_ids)

    therapy_records = []
    seen_ids = set()
    for lineno, row in read_tsv(paths["therapies"]):
        where = f"{paths['therapies']}:{lineno}"
        _require(row, ("patient_id", "therapy_id", "start_date", "end_date", "drugs"), where)
        pid = row["patient_id"].strip()
        if pid not in known:
            raise ReferentialIntegrity(f"{where}: unknown patient {pid!r}")
        tid = row["therapy_id"].strip()
        if tid in seen_ids:
            raise DuplicateRecord(f"{where}: duplicate therapy_id {tid!r}")
        seen_ids.add(tid)
        start = _parse_day(row["start_date"], where, "start_date")
        end = _parse_day(row["end_date"], where, "end_date") if row["end_date"].strip() else None
        codes = [c.strip() for c in row["drugs"].split(";") if c.strip()]
        for c in codes:
            if c not in DRUG_CLASSES:
                raise UnknownDrug(f"{where}: unknown drug code {c!r}")
        try:
            therapy_records.append(Therapy(pid, tid, start, end, frozenset(codes)))
        except ValueError as exc:
            raise MalformedRecord(f"{where}: {exc}") from None

    genotype_records = []
    for lineno, row in read_tsv(paths["genotypes"]):
        where = f"{paths['genotypes']}:{lineno}"
        _require(row, ("patient_id", "sample_date", "mutations"), where)
        pid = row["patient_id"].strip()
        if pid not in known:
            raise ReferentialIntegrity(f"{where}: unknown patient {pid!r}")
        day = _parse_day(row["sample_date"], where, "sample_date")
        try:
            muts = frozenset(parse_mutation(tok) for tok in row["mutations"].split(";") if tok.strip())
        except DataError as exc:
            raise type(exc)(f"{where}: {exc}") from None
        genotype_records.append(GenotypeTest(pid, day, muts))

    vl_records = []
    for lineno, row in read_tsv(paths["viral_loads"]):
        where = f"{paths['viral_loads']}:{lineno}"
        _require(row, ("patient_id", "date", "copies_per_ml"), where)
        pid = row["patient_id"].strip()
        if pid not in known:
            raise ReferentialIntegrity(f"{where}: unknown patient {pid!r}")
        day = _parse_day(row["date"], where, "date")
        try:
            copies = float(row["copies_per_ml"])
        except ValueError:
            raise MalformedRecord(f"{where}: bad copies_per_ml {row['copies_per_ml']!r}") from None
        if not math.isfinite(copies) or copies < 0:
            raise MalformedRecord(f"{where}: copies_per_ml must be a non-negative number")
        if copies < vl_floor:
            report.vl_clamped += 1
            copies = vl_floor
        vl_records.append(ViralLoadMeasurement(pid, day, copies))

    if report.vl_clamped:
        logger.info("clamped %d viral loads to the %g cp/ml floor", report.vl_clamped, vl_floor)
    return build_cohort(patient_ids, therapy_records, genotype_records, vl_records, report)


def _fmt_copies(x: float) -> str:
    return format(x, ".17g")


def write_cohort(cohort: Cohort, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / COHORT_FILES["patients"], "w", encoding="utf-8") as fh:
        fh.write("patient_id\n")
        for p in cohort.patients:
            fh.write(f"{p}\n")
    with open(directory / COHORT_FILES["therapies"], "w", encoding="utf-8") as fh:
        fh.write("patient_id\ttherapy_id\tstart_date\tend_date\tdrugs\n")
        for t in cohort.therapies:
            end = "" if t.end_date is None else from_day(t.end_date)
            fh.write(f"{t.patient_id}\t{t.therapy_id}\t{from_day(t.start_date)}\t{end}\t"
                     f"{';'.join(sorted(t.drugs))}\n")
    with open(directory / COHORT_FILES["genotypes"], "w", encoding="utf-8") as fh:
        fh.write("patient_id\tsample_date\tmutations\n")
        for p in cohort.patients:
            for g in cohort.patient_genotypes(p):
                toks = ";".join(render_mutation(m) for m in sorted(g.mutations))
                fh.write(f"{p}\t{from_day(g.sample_date)}\t{toks}\n")
    with open(directory / COHORT_FILES["viral_loads"], "w", encoding="utf-8") as fh:
        fh.write("patient_id\tdate\tcopies_per_ml\n")
        for p in cohort.patients:
            for v in cohort.patient_viral_loads(p):
                fh.write(f"{p}\t{from_day(v.date)}\t{_fmt_copies(v.copies_per_ml)}\n")


# --- eligibility -----------------------------------------------------------

class Reason:
    NO_BASELINE_GENOTYPE = "NoBaselineGenotype"
    NO_VL_BRACKET = "NoVlBracket"
    NO_STANDARD_DATUM = "NoStandardDatum"


@dataclass(frozen=True)
class Eligibility:
    accepted: tuple  # (Therapy, OutcomeLabel)
    rejected: tuple  # (Therapy, reason, detail)


def pre_therapy_genotypes(cohort: Cohort, therapy: Therapy) -> tuple:
    return tuple(g for g in cohort.patient_genotypes(therapy.patient_id)
                 if g.sample_date < therapy.start_date)


def vl_brackets(cohort: Cohort, patient_id, day: int) -> bool:
    """True when the patient has a VL strictly before and strictly after ``day``."""
    dates = cohort.vl_dates(patient_id)
    return bisect_left(dates, day) > 0 and bisect_right(dates, day) < len(dates)


def eligible_pairs(cohort: Cohort) -> Eligibility:
    """Split therapies into those usable as patient-therapy pairs and the rest.

    A therapy is accepted when (1) a genotype precedes its start, (2) every
    pre-therapy genotype date is bracketed by viral loads, and (3) the
    outcome labeling yields Success or Failure.
    """
    from .labeling import label_therapy

    accepted, rejected = [], []
    for therapy in cohort.therapies:
        grts = pre_therapy_genotypes(cohort, therapy)
        if not grts:
            rejected.append((therapy, Reason.NO_BASELINE_GENOTYPE, ""))
            continue
        unbracketed = [g.sample_date for g in grts
                       if not vl_brackets(cohort, therapy.patient_id, g.sample_date)]
        if unbracketed:
            rejected.append((therapy, Reason.NO_VL_BRACKET, from_day(unbracketed[0])))
            continue
        label = label_therapy(therapy, cohort.patient_viral_loads(therapy.patient_id))
        if label.value is Outcome.EXCLUDED:
            rejected.append((therapy, Reason.NO_STANDARD_DATUM, label.reason))
            continue
        accepted.append((therapy, label))
    return Eligibility(tuple(accepted), tuple(rejected))

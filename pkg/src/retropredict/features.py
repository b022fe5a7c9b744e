"""Patient-therapy pairs and the Full/Partial x History/No-history datasets."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _jsonio
from .domain import DRUG_CODES, Outcome, PatientTherapyPair, parse_mutation, render_mutation
from .ingest import Cohort, Eligibility, pre_therapy_genotypes
from .weighting import mutation_weight, normalize_areas, stanford_component, vl_area


class Scope(str, Enum):
    FULL = "Full"
    PARTIAL = "Partial"


class HistoryMode(str, Enum):
    HISTORY = "History"
    NO_HISTORY = "No-history"


class Encoding(str, Enum):
    WEIGHTED = "Weighted"
    BINARY = "Non-weighted"


@dataclass(frozen=True)
class DatasetVariant:
    scope: Scope
    history: HistoryMode
    encoding: Encoding

    @property
    def name(self) -> str:
        return f"{self.scope.value}_{self.history.value}_{self.encoding.value}"

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, name: str) -> "DatasetVariant":
        parts = name.strip().split("_")
        if len(parts) != 3:
            raise ValueError(f"bad variant name {name!r}")
        scope, hist, enc = parts
        try:
            hist = {"history": HistoryMode.HISTORY, "no-history": HistoryMode.NO_HISTORY,
                    "nohistory": HistoryMode.NO_HISTORY}[hist.lower()]
            enc = {"weighted": Encoding.WEIGHTED, "non-weighted": Encoding.BINARY,
                   "binary": Encoding.BINARY, "nonweighted": Encoding.BINARY}[enc.lower()]
        except KeyError:
            raise ValueError(f"bad variant name {name!r}") from None
        return cls(Scope(scope.capitalize()), hist, enc)


#: The six trained configurations.
PAPER_VARIANTS = tuple(DatasetVariant.parse(n) for n in (
    "Partial_History_Weighted",
    "Partial_No-history_Non-weighted",
    "Full_History_Weighted",
    "Full_No-history_Weighted",
    "Full_History_Non-weighted",
    "Full_No-history_Non-weighted",
))


def make_pair(cohort: Cohort, therapy, label) -> PatientTherapyPair:
    grts = pre_therapy_genotypes(cohort, therapy)
    last_seen = {}
    for g in grts:
        for m in g.mutations:
            last_seen[m] = g.sample_date
    latest = grts[-1]
    return PatientTherapyPair(
        therapy=therapy,
        history_mutations=last_seen,
        baseline_mutations=frozenset(latest.mutations),
        baseline_date=latest.sample_date,
        label=label.value,
        has_prior_history=len(grts) > 1,
        grt_dates=tuple(g.sample_date for g in grts),
    )


def make_pairs(cohort: Cohort, eligibility: Eligibility) -> list:
    pairs = [make_pair(cohort, t, lab) for t, lab in eligibility.accepted]
    return sorted(pairs, key=lambda p: (p.therapy.patient_id, p.therapy.start_date, p.therapy.therapy_id))


def pair_mutations(pair: PatientTherapyPair, history: HistoryMode) -> dict:
    """``{mutation: date last seen}`` for the genotype scope of ``history``."""
    if history is HistoryMode.HISTORY:
        return dict(pair.history_mutations)
    return {m: pair.baseline_date for m in pair.baseline_mutations}


@dataclass(frozen=True)
class WeightRecord:
    therapy_id: str
    mutation: object
    t_days: int
    raw_area: float
    normalized_area: float
    stanford: float
    weight: float


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    therapy_ids: list
    patient_ids: list
    has_history: np.ndarray
    mutation_universe: list
    drug_universe: tuple
    variant: Optional[DatasetVariant] = None
    area_scales: dict = field(default_factory=dict)
    weight_records: list = field(default_factory=list)

    @property
    def n_mutations(self) -> int:
        return len(self.mutation_universe)

    @property
    def feature_names(self) -> list:
        return [render_mutation(m) for m in self.mutation_universe] + list(self.drug_universe)

    @property
    def groups(self) -> np.ndarray:
        return np.asarray(self.patient_ids)

    def __len__(self):
        return len(self.y)

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        keep_ids = {self.therapy_ids[i] for i in index}
        return LabeledDataset(
            X=self.X[index], y=self.y[index],
            therapy_ids=[self.therapy_ids[i] for i in index],
            patient_ids=[self.patient_ids[i] for i in index],
            has_history=self.has_history[index],
            mutation_universe=self.mutation_universe, drug_universe=self.drug_universe,
            variant=self.variant, area_scales=self.area_scales,
            weight_records=[r for r in self.weight_records if r.therapy_id in keep_ids],
        )

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "dataset.tsv", "w", encoding="utf-8") as fh:
            fh.write("row_id\tfeature_index\tvalue\n")
            rows, cols = np.nonzero(self.X)
            for r, c in zip(rows, cols):
                fh.write(f"{r}\t{c}\t{format(float(self.X[r, c]), '.17g')}\n")
        with open(directory / "columns.tsv", "w", encoding="utf-8") as fh:
            fh.write("feature_index\tfeature\n")
            for i, name in enumerate(self.feature_names):
                fh.write(f"{i}\t{name}\n")
        with open(directory / "rows.tsv", "w", encoding="utf-8") as fh:
            fh.write("row_id\ttherapy_id\tpatient_id\tlabel\thas_history\n")
            for i in range(len(self.y)):
                fh.write(f"{i}\t{self.therapy_ids[i]}\t{self.patient_ids[i]}\t{int(self.y[i])}\t"
                         f"{int(self.has_history[i])}\n")
        with open(directory / "weights.tsv", "w", encoding="utf-8") as fh:
            fh.write("therapy_id\tmutation\tt_days\traw_area\tnormalized_area\tS\tweight\n")
            for r in self.weight_records:
                fh.write(f"{r.therapy_id}\t{render_mutation(r.mutation)}\t{r.t_days}\t"
                         + "\t".join(format(float(v), ".17g") for v in
                                     (r.raw_area, r.normalized_area, r.stanford, r.weight)) + "\n")
        _jsonio.dump({
            "variant": None if self.variant is None else self.variant.name,
            "n_mutations": self.n_mutations,
            "area_scales": {render_mutation(m): s for m, s in self.area_scales.items()},
        }, directory / "meta.json")

    @classmethod
    def load(cls, directory) -> "LabeledDataset":
        from .ingest import read_tsv

        directory = Path(directory)
        meta = _jsonio.load(directory / "meta.json")
        names = [row["feature"] for _, row in read_tsv(directory / "columns.tsv")]
        n_mut = int(meta["n_mutations"])
        rows = [row for _, row in read_tsv(directory / "rows.tsv")]
        X = np.zeros((len(rows), len(names)))
        for _, row in read_tsv(directory / "dataset.tsv"):
            X[int(row["row_id"]), int(row["feature_index"])] = float(row["value"])
        records = []
        if (directory / "weights.tsv").exists():
            records = [WeightRecord(r["therapy_id"], parse_mutation(r["mutation"]), int(r["t_days"]),
                                    float(r["raw_area"]), float(r["normalized_area"]),
                                    float(r["S"]), float(r["weight"]))
                       for _, r in read_tsv(directory / "weights.tsv")]
        return cls(
            X=X, y=np.array([int(r["label"]) for r in rows], dtype=int),
            therapy_ids=[r["therapy_id"] for r in rows],
            patient_ids=[r["patient_id"] for r in rows],
            has_history=np.array([r.get("has_history", "0") == "1" for r in rows]),
            mutation_universe=[parse_mutation(n) for n in names[:n_mut]],
            drug_universe=tuple(names[n_mut:]),
            variant=None if meta["variant"] is None else DatasetVariant.parse(meta["variant"]),
            area_scales={parse_mutation(k): v for k, v in meta["area_scales"].items()},
            weight_records=records,
        )


def mutation_universe(pairs: Sequence[PatientTherapyPair]) -> list:
    """All mutations appearing in any pair's full pre-therapy history."""
    seen = set()
    for p in pairs:
        seen.update(p.history_mutations)
    return sorted(seen)


def build_dataset(cohort: Cohort, pairs: Sequence[PatientTherapyPair], persistence, table,
                  variant: DatasetVariant, universe=None, train_patients=None, area_scales=None,
                  min_over_same_gene_class_only: bool = False) -> LabeledDataset:
    """Assemble the feature matrix of one dataset variant.

    ``universe`` defaults to the mutations of all ``pairs`` (the Full
    scope) so columns line up across variants. For Weighted variants the
    per-mutation area scales are learned from the rows of
    ``train_patients`` (all rows when None) unless ``area_scales`` is given.
    """
    if universe is None:
        universe = mutation_universe(pairs)
    selected = [p for p in pairs if variant.scope is Scope.FULL or p.has_prior_history]
    if not selected:
        raise ValueError(f"variant {variant.name} has no rows")
    col = {m: i for i, m in enumerate(universe)}
    n_mut = len(universe)
    drug_col = {d: n_mut + i for i, d in enumerate(DRUG_CODES)}
    X = np.zeros((len(selected), n_mut + len(DRUG_CODES)))
    for i, p in enumerate(selected):
        for d in p.therapy.drugs:
            X[i, drug_col[d]] = 1.0

    records = []
    scales = {}
    if variant.encoding is Encoding.BINARY:
        for i, p in enumerate(selected):
            for m in pair_mutations(p, variant.history):
                if m in col:
                    X[i, col[m]] = 1.0
    else:
        area_cache = {}
        raw = []  # (row, mutation, last_seen, t, area)
        for i, p in enumerate(selected):
            pid = p.therapy.patient_id
            vls = cohort.patient_viral_loads(pid)
            dates = cohort.vl_dates(pid)
            copies = [v.copies_per_ml for v in vls]
            for m, seen in sorted(pair_mutations(p, variant.history).items()):
                if m not in col:
                    continue
                key = (pid, seen)
                if key not in area_cache:
                    area_cache[key] = vl_area(dates, copies, seen)
                raw.append((i, m, seen, p.therapy.start_date - seen, area_cache[key]))
        if area_scales is None:
            train = None if train_patients is None else set(train_patients)
            fit_on = {(m, (selected[i].therapy.patient_id, seen)): a for i, m, seen, _, a in raw
                      if train is None or selected[i].therapy.patient_id in train}
            _, scales = normalize_areas(fit_on)
        else:
            scales = dict(area_scales)
        for i, m, seen, t, area in raw:
            p = selected[i]
            scale = scales.get(m, 1.0)
            norm = min(1.0, max(-1.0, area / scale))
            s = stanford_component(m, p.therapy.drugs, table, min_over_same_gene_class_only)
            w = mutation_weight(persistence.params(m), t, norm, s)
            X[i, col[m]] = w.value
            records.append(WeightRecord(p.therapy.therapy_id, m, t, area, norm, s, w.value))

    return LabeledDataset(
        X=X,
        y=np.array([int(p.label is Outcome.FAILURE) for p in selected], dtype=int),
        therapy_ids=[p.therapy.therapy_id for p in selected],
        patient_ids=[p.therapy.patient_id for p in selected],
        has_history=np.array([p.has_prior_history for p in selected], dtype=bool),
        mutation_universe=list(universe), drug_universe=DRUG_CODES,
        variant=variant, area_scales=scales, weight_records=records,
    )


def split_patients(patient_ids: Sequence[str], train_fraction: float = 0.75, seed: int = 0) -> set:
    """Shuffle patients and fill the training side until it holds ``train_fraction`` of rows.

    The last patient in shuffled order always goes to the test side, so
    neither side is empty.
    """
    counts = Counter(patient_ids)
    patients = sorted(counts)
    if len(patients) < 2:
        raise ValueError("splitting by patient needs at least two patients")
    order = np.random.default_rng(seed).permutation(len(patients))
    target = train_fraction * len(patient_ids)
    train, filled = set(), 0
    for idx in order[:-1]:
        if filled >= target:
            break
        train.add(patients[idx])
        filled += counts[patients[idx]]
    return train


def split_by_patient(dataset: LabeledDataset, train_fraction: float = 0.75, seed: int = 0,
                     train_patients=None):
    """Return ``(train, test)`` with no patient on both sides."""
    if train_patients is None:
        train_patients = split_patients(dataset.patient_ids, train_fraction, seed)
    mask = np.array([p in train_patients for p in dataset.patient_ids])
    return dataset.subset(mask), dataset.subset(~mask)

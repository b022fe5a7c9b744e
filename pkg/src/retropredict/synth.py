"""Seeded synthetic cohorts with planted persistence curves and a reservoir effect.

Each patient receives a sequence of therapies (two NRTIs plus a PI, NNRTI
or INI). Failing therapies select resistance mutations of the classes in
the regimen. When a class is no longer given, its mutations fade from the
blood following a planted sigmoid ``1 / (1 + exp(alpha + beta * t))``;
once faded they are archived and resurface whenever a regimen of their
class fails again.

The failure log-odds of a therapy is

    base_logit + class_effect + resistance_effect * R_current
               + reservoir_effect * R_archive

where ``R_current`` scores the mutations of the latest genotype against the
regimen and ``R_archive`` scores mutations seen in earlier genotypes but
absent from the latest one, each damped by its planted persistence at the
time since it was last seen. Labels are then flipped with probability
``label_noise`` and viral-load series are drawn so that the outcome
labeling reproduces the final label.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _jsonio
from .domain import (
    DRUG_CLASSES,
    CLASS_GENE,
    DrugClass,
    GenotypeTest,
    MutationId,
    Therapy,
    ViralLoadMeasurement,
    render_mutation,
    to_day,
)
from .exceptions import ConfigurationError
from .ingest import StanfordScoreTable, build_cohort, write_cohort, write_stanford_table

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
START_DAY = to_day("2000-01-01")
CLASS_MIX = (("PI", 0.25), ("NRTI", 0.25), ("NNRTI", 0.25), ("INI", 0.15))
POSITION_RANGES = {"PR": (10, 99), "RT": (40, 348), "IN": (50, 288)}
THIRD_AGENT_CLASSES = (DrugClass.PI, DrugClass.NNRTI, DrugClass.INI)

DEFAULT_MENU = (
    "3TC", "ABC", "AZT", "FTC", "TAF", "TDF",
    "DOR", "EFV", "ETR", "NVP", "RPV",
    "ATV", "DRV", "FPV", "LPV", "SQV",
    "BIC", "DTG", "EVG", "RAL",
)

# decay states of an acquired mutation
_ON, _FADING, _ARCHIVED = 0, 1, 2


@dataclass
class SynthConfig:
    """Generator settings.

    ``persistence_truth`` maps mutation tokens to planted ``(alpha, beta)``;
    when None, resistance mutations are split evenly between the two
    groups given by ``beta_groups`` and ``half_lives`` (days at which the
    curve crosses one half, so ``alpha = -beta * half_life``).
    """

    n_patients: int = 2000
    n_mutations: int = 60
    drug_menu: tuple = DEFAULT_MENU
    persistence_truth: Optional[dict] = None
    beta_groups: tuple = (0.005, 0.05)
    half_lives: tuple = (600.0, 100.0)
    group_share: tuple = (0.5, 0.5)
    reservoir_effect: float = 1.0
    resistance_effect: float = 1.0
    base_logit: float = -1.5
    class_effect: dict = field(default_factory=lambda: {"PI": 0.0, "NNRTI": 0.2, "INI": -0.3})
    resistance_scale: float = 80.0
    vl_noise_sd: float = 0.25
    label_noise: float = 0.05
    therapies_per_patient: tuple = (3, 6)
    class_switch_prob: float = 0.9
    interruption_prob: float = 0.5
    interruption_genotype_prob: float = 0.7
    acquisition_rate: float = 2.0
    polymorphism_rate: float = 0.15
    archive_damping: bool = False
    regimen_specific: bool = False
    detection_miss: float = 0.0
    seed: int = 7

    def validate(self) -> None:
        if self.n_patients < 1:
            raise ConfigurationError("n_patients must be positive")
        if self.n_mutations < 5:
            raise ConfigurationError("n_mutations must cover the four drug classes and polymorphisms")
        menu_classes = {DRUG_CLASSES[d] for d in self.drug_menu if d in DRUG_CLASSES}
        unknown = [d for d in self.drug_menu if d not in DRUG_CLASSES]
        if unknown:
            raise ConfigurationError(f"unknown drugs in menu: {unknown}")
        if sum(DRUG_CLASSES[d] is DrugClass.NRTI for d in self.drug_menu) < 2:
            raise ConfigurationError("drug menu needs at least two NRTIs")
        if not menu_classes & set(THIRD_AGENT_CLASSES):
            raise ConfigurationError("drug menu needs a PI, NNRTI or INI")
        if self.reservoir_effect < 0:
            raise ConfigurationError("reservoir_effect must be >= 0")
        if not 0 <= self.label_noise < 0.5:
            raise ConfigurationError("label_noise must lie in [0, 0.5)")
        lo, hi = self.therapies_per_patient
        if not 1 <= lo <= hi:
            raise ConfigurationError("bad therapies_per_patient range")
        if not len(self.beta_groups) == len(self.half_lives) == len(self.group_share):
            raise ConfigurationError("beta_groups and half_lives differ in length")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["drug_menu"] = list(self.drug_menu)
        d["beta_groups"] = list(self.beta_groups)
        d["half_lives"] = list(self.half_lives)
        d["group_share"] = list(self.group_share)
        d["therapies_per_patient"] = list(self.therapies_per_patient)
        if self.persistence_truth is not None:
            d["persistence_truth"] = {k: list(v) for k, v in self.persistence_truth.items()}
        return d


@dataclass(frozen=True)
class PlantedMutation:
    mutation: MutationId
    cls: Optional[DrugClass]  # None for polymorphisms
    group: Optional[int]
    alpha: float
    beta: float

    def presence(self, t):
        return 1.0 / (1.0 + math.exp(min(self.alpha + self.beta * t, 700.0)))


@dataclass
class SynthCohort:
    cohort: object
    table: StanfordScoreTable
    truth: dict


def _catalog(cfg: SynthConfig, rng):
    counts = {c: int(round(frac * cfg.n_mutations)) for c, frac in CLASS_MIX}
    n_poly = cfg.n_mutations - sum(counts.values())
    if n_poly < 1:
        counts["PI"] -= 1 - n_poly
        n_poly = 1
    if min(counts.values()) < 1:
        raise ConfigurationError("n_mutations too small for every drug class")
    plan = []
    for name, n in counts.items():
        plan += [(DrugClass(name), CLASS_GENE[DrugClass(name)])] * n
    plan += [(None, g) for g in rng.choice(list(POSITION_RANGES), size=n_poly)]

    used = {g: set() for g in POSITION_RANGES}
    mutations = []
    for cls, gene in plan:
        lo, hi = POSITION_RANGES[gene]
        while True:
            pos = int(rng.integers(lo, hi + 1))
            if pos not in used[gene]:
                used[gene].add(pos)
                break
        mutations.append((cls, MutationId(gene, pos, AMINO_ACIDS[int(rng.integers(len(AMINO_ACIDS)))])))

    truth = cfg.persistence_truth or {}
    planted = []
    for cls in list(DrugClass) + [None]:
        members = [m for c, m in mutations if c is cls]
        share = np.asarray(cfg.group_share, dtype=float)
        sizes = np.floor(share / share.sum() * len(members)).astype(int)
        sizes[: len(members) - sizes.sum()] += 1
        groups = np.repeat(np.arange(len(sizes)), sizes)
        rng.shuffle(groups)
        for m, g in zip(members, groups):
            token = render_mutation(m)
            if cls is None:
                planted.append(PlantedMutation(m, None, None, 0.0, 0.0))
            elif token in truth:
                a, b = truth[token]
                planted.append(PlantedMutation(m, cls, None, float(a), float(b)))
            else:
                beta = float(cfg.beta_groups[g])
                planted.append(PlantedMutation(m, cls, int(g), -beta * float(cfg.half_lives[g]), beta))
    planted.sort(key=lambda p: p.mutation)
    return planted


def _score_table(planted, rng) -> StanfordScoreTable:
    scores = {}
    for p in planted:
        if p.cls is None:
            continue
        level = int(rng.integers(3, 13)) * 5
        drugs = sorted(d for d, c in DRUG_CLASSES.items() if c is p.cls)
        for i, d in enumerate(drugs):
            if i > 0 and rng.random() < 0.15:
                continue
            scores[(p.mutation, d)] = int(np.clip(level + 5 * int(rng.integers(-2, 3)), 5, 60))
    return StanfordScoreTable(scores)


class _Patient:
    """Event log of one simulated patient."""

    def __init__(self, pid):
        self.pid = pid
        self.therapies = []
        self.grts = []  # (day, frozenset)
        self.vls = []  # (day, copies)
        self.state = {}  # index -> [mode, class stop day]
        self.records = []

    def vl(self, day, log10_copies):
        self.vls.append((int(day), max(20.0, float(round(10.0 ** log10_copies)))))

    def last_vl_before(self, day):
        prior = [v for v in self.vls if v[0] <= day]
        return max(prior)[1] if prior else None


def _simulate_patient(idx, cfg, planted, table, menu, rng, class_level):
    pat = _Patient(f"P{idx + 1:05d}")
    by_class = {c: [i for i, p in enumerate(planted) if p.cls is c] for c in DrugClass}
    poly = frozenset(planted[i].mutation for i, p in enumerate(planted)
                     if p.cls is None and rng.random() < cfg.polymorphism_rate)
    sd = cfg.vl_noise_sd

    def high():
        return max(2.3, rng.normal(4.2, sd))

    def suppressed():
        return rng.uniform(math.log10(20), math.log10(45))

    def visible(i, day):
        # a fading mutation is detected with its planted presence probability,
        # drawn afresh at every genotype
        mode, stop = pat.state[i]
        if mode == _ON:
            return True
        if mode == _FADING:
            return rng.random() < planted[i].presence(day - stop)
        return False

    def genotype(day):
        seen = {planted[i].mutation for i in pat.state if visible(i, day)
                and not (pat.state[i][0] == _ON and rng.random() < cfg.detection_miss)}
        pat.grts.append((int(day), frozenset(seen) | poly))

    def stop_classes(classes, day):
        for i, st in pat.state.items():
            if st[0] == _ON and planted[i].cls in classes:
                pat.state[i] = [_FADING, int(day)]

    def resume_classes(classes, day):
        for i, st in pat.state.items():
            if st[0] == _FADING and planted[i].cls in classes:
                st[0] = _ON if visible(i, day) else _ARCHIVED
                st[1] = 0

    def fail(classes, regimen):
        for i, st in pat.state.items():
            if st[0] == _ARCHIVED and planted[i].cls in classes:
                st[0] = _ON
        for c in sorted(classes, key=lambda c: c.value):
            pool = [i for i in by_class[c] if i not in pat.state
                    and any(table.score(planted[i].mutation, d) > 0 for d in regimen)]
            k = min(len(pool), int(rng.poisson(cfg.acquisition_rate)))
            for i in rng.choice(pool, size=k, replace=False) if k else ():
                pat.state[int(i)] = [_ON, 0]

    nrtis = sorted(d for d in menu if DRUG_CLASSES[d] is DrugClass.NRTI)
    thirds = {c: sorted(d for d in menu if DRUG_CLASSES[d] is c) for c in THIRD_AGENT_CLASSES}
    thirds = {c: v for c, v in thirds.items() if v}
    third_classes = sorted(thirds, key=lambda c: c.value)

    day = START_DAY + int(rng.integers(0, 3650))
    pat.vl(day, high())
    day += int(rng.integers(5, 30))
    genotype(day)
    start = day + int(rng.integers(40, 91))
    pat.vl(start - int(rng.integers(1, 7)), high())

    n_ther = int(rng.integers(cfg.therapies_per_patient[0], cfg.therapies_per_patient[1] + 1))
    sequence = [third_classes[int(rng.integers(len(third_classes)))]]
    for _ in range(n_ther - 1):
        options = [c for c in third_classes if c is not sequence[-1]]
        if options and rng.random() < cfg.class_switch_prob:
            sequence.append(options[int(rng.integers(len(options)))])
        else:
            sequence.append(sequence[-1])
    for k, third in enumerate(sequence):
        pair = rng.choice(nrtis, size=2, replace=False)
        regimen = frozenset([str(pair[0]), str(pair[1]), thirds[third][int(rng.integers(len(thirds[third])))]])
        classes = {DrugClass.NRTI, third}
        resume_classes(classes, start)

        # planted outcome from what the genotypes show
        latest = pat.grts[-1][1]
        last_seen = {}
        for gday, muts in pat.grts:
            for m in muts:
                last_seen[m] = gday
        r_cur = r_arch = 0.0
        for p in planted:
            if p.cls is None or p.mutation not in last_seen:
                continue
            scores = [table.score(p.mutation, d) for d in regimen]
            if p.mutation in latest:
                r_cur += sum(scores) / cfg.resistance_scale if cfg.regimen_specific else class_level[p.mutation]
            elif max(scores) > 0 or not cfg.regimen_specific:
                # one unit of reservoir log-odds per relevant archived mutation
                r_arch += p.presence(start - last_seen[p.mutation]) if cfg.archive_damping else 1.0
        logit = (cfg.base_logit + cfg.class_effect.get(third.value, 0.0)
                 + cfg.resistance_effect * r_cur + cfg.reservoir_effect * r_arch)
        failed = bool(rng.random() < 1.0 / (1.0 + math.exp(-logit)))
        flipped = bool(rng.random() < cfg.label_noise)
        failed ^= flipped

        kind = rng.choice(3, p=[0.05, 0.12, 0.83])
        last = k == n_ther - 1
        base = pat.last_vl_before(start)
        if kind == 0:  # toxicity stop, never labeled
            duration = int(rng.integers(7, 28))
            end = start + duration
            pat.vl(end - 1, math.log10(base))
            failed = False
        elif kind == 1:  # early stop
            duration = int(rng.integers(35, 136))
            end = start + duration
            required = 1.0 if duration <= 56 else 2.0
            pat.vl(start + int(rng.integers(10, 19)), high() if failed else rng.uniform(2.0, 3.2))
            if failed:
                fail(classes, regimen)
                genotype(end - int(rng.integers(4, 9)))
                pat.vl(end - int(rng.integers(0, 4)),
                       max(2.0, math.log10(base) - rng.uniform(0.0, required - 0.3)))
            else:
                pat.vl(end - int(rng.integers(0, 4)), suppressed())
        else:  # full course
            duration = int(rng.integers(230, 901))
            end = start + duration
            pat.vl(start + int(rng.integers(25, 36)), high() if failed else rng.uniform(1.8, 3.0))
            pat.vl(start + int(rng.integers(80, 101)), high() if failed else suppressed())
            d = start + 168 + int(rng.integers(-10, 11))
            pat.vl(d, high() if failed else suppressed())
            d += int(rng.integers(60, 101))
            while d < end - 25:
                pat.vl(d, high() if failed else suppressed())
                d += int(rng.integers(80, 101))
            if failed:
                fail(classes, regimen)
                genotype(end - int(rng.integers(40, 61)))
            pat.vl(end - int(rng.integers(0, 6)), high() if failed else suppressed())

        open_ended = last and kind == 2 and rng.random() < 0.3
        pat.therapies.append(Therapy(pat.pid, f"{pat.pid}-T{k + 1}", int(start),
                                     None if open_ended else int(end), regimen))
        pat.records.append({"therapy_id": f"{pat.pid}-T{k + 1}", "planted_failure": int(failed),
                            "label_flipped": int(flipped), "r_current": r_cur, "r_archive": r_arch,
                            "logit": logit, "excluded": int(kind == 0)})
        if last:
            pat.vl(end + int(rng.integers(20, 61)), high() if failed else suppressed())
            break
        # Successes and early stops are followed by a treatment pause ending in a
        # viremic genotype. Every genotype lies at least 40 days before the next
        # start with a viral load in between, so its +/-30 day area never reaches
        # on-therapy measurements.
        if kind == 1 or (kind == 2 and not failed) or rng.random() < cfg.interruption_prob:
            gap = int(rng.integers(90, 401))
            start = end + gap
            stop_classes(set(DrugClass), end)
            final_grt = start - int(rng.integers(40, 61))
            d = end + int(rng.integers(15, 31))
            while d < final_grt - 10:
                pat.vl(d, high())
                if rng.random() < cfg.interruption_genotype_prob:
                    genotype(d + int(rng.integers(3, 8)))
                d += int(rng.integers(30, 61))
            genotype(final_grt)
            pat.vl(start - int(rng.integers(1, 7)), high())
        else:
            start = end + 1
            if sequence[k + 1] is not third:
                stop_classes({third}, end)
    return pat


def generate_cohort(config: SynthConfig, out_dir=None) -> SynthCohort:
    """Simulate a cohort; with ``out_dir`` also write the cohort files,
    ``stanford_scores.tsv`` and ``truth.json`` there."""
    config.validate()
    root = np.random.SeedSequence(config.seed)
    cat_seed, table_seed, patient_seed = root.spawn(3)
    planted = _catalog(config, np.random.default_rng(cat_seed))
    table = _score_table(planted, np.random.default_rng(table_seed))
    menu = tuple(sorted(set(config.drug_menu)))
    class_level = {p.mutation: max([table.score(p.mutation, d) for d in DRUG_CLASSES] or [0]) / config.resistance_scale
                   for p in planted}

    therapies, genotypes, vls, patients, records = [], [], [], [], []
    for idx, child in enumerate(patient_seed.spawn(config.n_patients)):
        pat = _simulate_patient(idx, config, planted, table, menu, np.random.default_rng(child), class_level)
        patients.append(pat.pid)
        therapies += pat.therapies
        genotypes += [GenotypeTest(pat.pid, d, muts) for d, muts in pat.grts]
        vls += [ViralLoadMeasurement(pat.pid, d, c) for d, c in pat.vls]
        records += pat.records
    cohort = build_cohort(patients, therapies, genotypes, vls)

    truth = {
        "config": config.to_dict(),
        "mutations": {
            render_mutation(p.mutation): {
                "class": None if p.cls is None else p.cls.value,
                "group": p.group, "alpha": p.alpha, "beta": p.beta,
            } for p in planted
        },
        "therapies": records,
    }
    if out_dir is not None:
        out = Path(out_dir)
        write_cohort(cohort, out)
        write_stanford_table(table, out / "stanford_scores.tsv")
        _jsonio.dump(truth, out / "truth.json")
    return SynthCohort(cohort, table, truth)


def planted_groups(truth: dict) -> dict:
    """``{group: [tokens]}`` for mutations with a planted persistence group."""
    groups = {}
    for token, info in sorted(truth["mutations"].items()):
        if info["group"] is not None:
            groups.setdefault(int(info["group"]), []).append(token)
    return dict(sorted(groups.items()))

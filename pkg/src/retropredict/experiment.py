"""End-to-end experiment: ingest, label, persistence, datasets, training, evaluation, ranking.

Every stage writes its outputs under ``out_dir`` and is recorded in
``manifest.json``; a resumed run reloads completed stages from disk
instead of recomputing them.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _jsonio
from .domain import Outcome, from_day
from .exceptions import ConfigurationError, DataError
from .features import (PAPER_VARIANTS, DatasetVariant, LabeledDataset, Scope, build_dataset,
                       make_pair, mutation_universe, split_patients)
from .ingest import (Cohort, eligible_pairs, load_cohort, load_stanford_table, read_tsv,
                     write_cohort, write_stanford_table)
from .labeling import OutcomeLabel, Rule
from .learner import SvmModel, fit_final, random_search_cv
from .persistence import PersistenceModel, build_persistence_model
from .ranking import composite_ranking, elbow_select, write_ranking, write_scree
from .stats import (compare_probability_distributions, metrics_report, nadeau_bengio_test,
                    roc_auc, roc_points)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "label", "fit-persistence", "build-datasets", "train", "evaluate", "rank")
REFERENCE = "History_Weighted"
PERSISTENCE_FILE = "persistence_model.json"


@dataclass
class ExperimentPlan:
    """What to train and compare.

    ``comparisons`` lists ``(variant, reference)`` name pairs tested with
    the corrected resampled t-test over seeds; by default every variant is
    compared with the History_Weighted variant of its own scope.
    """

    variants: tuple = tuple(v.name for v in PAPER_VARIANTS)
    seeds: tuple = (0,)
    comparisons: Optional[tuple] = None
    train_fraction: float = 0.75
    n_candidates: int = 60
    n_folds: int = 5
    n_repeats: int = 5
    alpha: float = 0.05
    n_bootstrap: int = 1000
    persistence_seed: Optional[int] = None
    k_per_class: Optional[dict] = None
    use_centroids: bool = False
    fallback_bounds: Optional[dict] = None
    min_over_same_gene_class_only: bool = False
    rank_variant: str = "Full_History_Weighted"
    sum_over_all_rows: bool = False
    n_jobs: int = 1
    svm_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variants = tuple(DatasetVariant.parse(v).name if isinstance(v, str) else v.name
                              for v in self.variants)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.comparisons is not None:
            self.comparisons = tuple((DatasetVariant.parse(a).name, DatasetVariant.parse(b).name)
                                     for a, b in self.comparisons)

    def validate(self) -> None:
        if not self.variants:
            raise ConfigurationError("plan needs at least one variant")
        if len(set(self.variants)) != len(self.variants):
            raise ConfigurationError("duplicate variants in plan")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("plan needs distinct seeds")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError("train_fraction must lie in (0, 1)")
        if self.n_candidates < 1 or self.n_folds < 2 or self.n_repeats < 1:
            raise ConfigurationError("bad cross-validation settings")
        for a, b in self.comparison_pairs():
            if a not in self.variants or b not in self.variants:
                raise ConfigurationError(f"comparison {a} vs {b} names a variant outside the plan")

    def comparison_pairs(self) -> list:
        if self.comparisons is not None:
            return list(self.comparisons)
        pairs = []
        for name in self.variants:
            ref = f"{DatasetVariant.parse(name).scope.value}_{REFERENCE}"
            if ref != name and ref in self.variants:
                pairs.append((name, ref))
        return pairs

    @property
    def cluster_seed(self) -> int:
        return self.seeds[0] if self.persistence_seed is None else int(self.persistence_seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = list(self.variants)
        d["seeds"] = list(self.seeds)
        d["comparisons"] = [list(p) for p in self.comparison_pairs()]
        return d


# --- stage bookkeeping ----------------------------------------------------------

class _Manifest:
    def __init__(self, out_dir: Optional[Path], plan: ExperimentPlan, resume: bool):
        self.out_dir = out_dir
        self.plan_hash = hashlib.sha256(_jsonio.dumps(plan.to_dict()).encode()).hexdigest()
        self.completed = []
        if out_dir is None:
            return
        path = out_dir / "manifest.json"
        if resume and path.exists():
            data = _jsonio.load(path)
            if data.get("plan_hash") != self.plan_hash:
                raise ConfigurationError("cannot resume: output directory was produced by a different plan")
            self.completed = list(data.get("completed", []))

    def done(self, stage: str) -> bool:
        return self.out_dir is not None and stage in self.completed

    def mark(self, stage: str) -> None:
        if self.out_dir is None:
            return
        if stage not in self.completed:
            self.completed.append(stage)
        _jsonio.dump({"plan_hash": self.plan_hash, "stages": list(STAGES),
                      "completed": self.completed}, self.out_dir / "manifest.json")


def _write_labels(cohort: Cohort, elig, path: Path) -> None:
    rows = []
    for t, lab in elig.accepted:
        date, vl = ("", "") if lab.deciding_vl is None else (from_day(lab.deciding_vl[0]),
                                                             format(float(lab.deciding_vl[1]), ".17g"))
        rows.append((t.therapy_id, lab.value.value, "" if lab.rule_fired is None else lab.rule_fired.value,
                     date, vl, lab.reason))
    for t, reason, detail in elig.rejected:
        rows.append((t.therapy_id, Outcome.EXCLUDED.value, "", "", "", f"{reason}:{detail}" if detail else reason))
    rows.sort()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("therapy_id\tlabel\trule_fired\tdeciding_vl_date\tdeciding_vl\treason\n")
        for r in rows:
            fh.write("\t".join(r) + "\n")


def _read_pairs(cohort: Cohort, path: Path) -> list:
    by_id = {t.therapy_id: t for t in cohort.therapies}
    pairs = []
    for lineno, row in read_tsv(path):
        outcome = Outcome(row["label"])
        if outcome is Outcome.EXCLUDED:
            continue
        therapy = by_id.get(row["therapy_id"])
        if therapy is None:
            raise DataError(f"{path}:{lineno}: unknown therapy {row['therapy_id']}")
        label = OutcomeLabel(outcome, Rule(row["rule_fired"]) if row["rule_fired"] else None)
        pairs.append(make_pair(cohort, therapy, label))
    return sorted(pairs, key=lambda p: (p.therapy.patient_id, p.therapy.start_date, p.therapy.therapy_id))


def _write_predictions(path: Path, ds: LabeledDataset, p_fail) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("therapy_id\tpatient_id\tlabel\thas_history\tfailure_probability\n")
        for i in range(len(ds.y)):
            fh.write(f"{ds.therapy_ids[i]}\t{ds.patient_ids[i]}\t{int(ds.y[i])}\t"
                     f"{int(ds.has_history[i])}\t{float(p_fail[i]):.17g}\n")


# --- orchestration --------------------------------------------------------------

@dataclass
class ExperimentResult:
    report: dict
    models: dict  # (seed, variant) -> SvmModel
    datasets: dict  # (seed, variant) -> (train, test)
    persistence: PersistenceModel
    ranking: list = field(default_factory=list)


def _aggregate(values):
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "per_seed": [float(x) for x in v]}


def run_experiment(plan: ExperimentPlan, cohort, table=None, out_dir=None, resume: bool = False,
                   stop_after: Optional[str] = None) -> ExperimentResult:
    """Run the whole protocol.

    Parameters
    ----------
    plan : ExperimentPlan
    cohort : Cohort or path
        An in-memory cohort or a directory of cohort TSVs (which may also
        hold ``stanford_scores.tsv``).
    table : StanfordScoreTable or path, optional
    out_dir : path, optional
        Where stage outputs go. Without it nothing is written and resuming
        is impossible.
    resume : bool
        Reload stages listed as completed in the manifest.
    stop_after : str, optional
        Name of the last stage to run.
    """
    plan.validate()
    if stop_after is not None and stop_after not in STAGES:
        raise ConfigurationError(f"unknown stage {stop_after!r}")
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(out, plan, resume)
    if out is not None:
        _jsonio.dump(plan.to_dict(), out / "plan.json")

    def finished(stage):
        manifest.mark(stage)
        return stop_after == stage

    # ingest
    if manifest.done("ingest"):
        cohort = load_cohort(out / "cohort")
        table = load_stanford_table(out / "stanford_scores.tsv")
    else:
        if not isinstance(cohort, Cohort):
            src = Path(cohort)
            cohort = load_cohort(src)
            if table is None and (src / "stanford_scores.tsv").exists():
                table = src / "stanford_scores.tsv"
        if table is None:
            raise ConfigurationError("a resistance score table is required")
        if not hasattr(table, "score"):
            table = load_stanford_table(table)
        if out is not None:
            write_cohort(cohort, out / "cohort")
            write_stanford_table(table, out / "stanford_scores.tsv")
    if finished("ingest"):
        return ExperimentResult({}, {}, {}, None)

    # label
    if manifest.done("label"):
        pairs = _read_pairs(cohort, out / "labels.tsv")
    else:
        elig = eligible_pairs(cohort)
        pairs = sorted((make_pair(cohort, t, lab) for t, lab in elig.accepted),
                       key=lambda p: (p.therapy.patient_id, p.therapy.start_date, p.therapy.therapy_id))
        if out is not None:
            _write_labels(cohort, elig, out / "labels.tsv")
    if not pairs:
        raise DataError("no therapy qualifies as a patient-therapy pair")
    if finished("label"):
        return ExperimentResult({}, {}, {}, None)

    # persistence
    if manifest.done("fit-persistence"):
        persistence = PersistenceModel.load(out / PERSISTENCE_FILE)
    else:
        persistence = build_persistence_model(cohort, table, plan.k_per_class, plan.cluster_seed,
                                              plan.use_centroids, plan.fallback_bounds)
        if out is not None:
            persistence.save(out / PERSISTENCE_FILE)
    if finished("fit-persistence"):
        return ExperimentResult({}, {}, {}, persistence)

    # datasets, one patient split per seed shared by all variants
    universe = mutation_universe(pairs)
    all_pids = [p.therapy.patient_id for p in pairs]
    datasets = {}
    for seed in plan.seeds:
        sdir = None if out is None else out / f"seed_{seed}"
        if manifest.done("build-datasets"):
            train_patients = set(_jsonio.load(sdir / "split.json")["train_patients"])
            for name in plan.variants:
                datasets[seed, name] = (LabeledDataset.load(sdir / "datasets" / name / "train"),
                                        LabeledDataset.load(sdir / "datasets" / name / "test"))
            continue
        train_patients = split_patients(all_pids, plan.train_fraction, seed)
        if sdir is not None:
            sdir.mkdir(parents=True, exist_ok=True)
            _jsonio.dump({"seed": seed, "train_patients": sorted(train_patients)}, sdir / "split.json")
        for name in plan.variants:
            variant = DatasetVariant.parse(name)
            ds = build_dataset(cohort, pairs, persistence, table, variant, universe=universe,
                               train_patients=train_patients,
                               min_over_same_gene_class_only=plan.min_over_same_gene_class_only)
            mask = np.array([p in train_patients for p in ds.patient_ids])
            train, test = ds.subset(mask), ds.subset(~mask)
            if len(np.unique(train.y)) < 2 or len(np.unique(test.y)) < 2:
                raise DataError(f"seed {seed}, {name}: a split side holds a single class")
            datasets[seed, name] = (train, test)
            if sdir is not None:
                train.save(sdir / "datasets" / name / "train")
                test.save(sdir / "datasets" / name / "test")
    if finished("build-datasets"):
        return ExperimentResult({}, {}, datasets, persistence)

    # train
    models = {}
    for seed in plan.seeds:
        for name in plan.variants:
            path = None if out is None else out / f"seed_{seed}" / "models" / f"{name}.json"
            if manifest.done("train"):
                models[seed, name] = SvmModel.load(path)
                continue
            train, _ = datasets[seed, name]
            selected, results = random_search_cv(
                train.X, train.y, train.groups, plan.n_candidates, seed, plan.n_folds, plan.n_repeats,
                plan.alpha, plan.n_jobs, plan.svm_params)
            est = fit_final(train.X, train.y, train.groups, selected, seed, plan.svm_params)
            config = {"variant": name, "seed": seed, "selected_C": selected,
                      "n_candidates": plan.n_candidates, "n_folds": plan.n_folds,
                      "n_repeats": plan.n_repeats, "alpha": plan.alpha, "svm_params": plan.svm_params,
                      "n_train": len(train)}
            model = SvmModel.from_estimator(est, train.feature_names, train.n_mutations, config, results)
            models[seed, name] = model
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                model.save(path)
    if finished("train"):
        return ExperimentResult({}, models, datasets, persistence)

    # evaluate
    report = evaluate(plan, datasets, models, out)
    if out is not None:
        _jsonio.dump(report, out / "report.json")
    if finished("evaluate"):
        return ExperimentResult(report, models, datasets, persistence)

    # rank
    entries = []
    if plan.rank_variant in plan.variants:
        seed = plan.seeds[0]
        train, _ = datasets[seed, plan.rank_variant]
        if train.weight_records:
            model = models[seed, plan.rank_variant]
            entries = composite_ranking(model, train.mutation_universe, train.weight_records,
                                        plan.sum_over_all_rows, len(train) if plan.sum_over_all_rows else None)
            values = [e.ranking_value for e in entries]
            cutoff = elbow_select(values) if len(values) >= 3 else len(values) - 1
            report["ranking"] = {"variant": plan.rank_variant, "seed": seed, "cutoff_index": cutoff,
                                 "n_selected": cutoff + 1}
            if out is not None:
                write_ranking(entries, cutoff, out / "ranking.tsv")
                write_scree(values, out / "scree.tsv")
                _jsonio.dump(report, out / "report.json")
    manifest.mark("rank")
    return ExperimentResult(report, models, datasets, persistence, entries)


def evaluate(plan: ExperimentPlan, datasets: dict, models: dict, out: Optional[Path] = None) -> dict:
    """Metrics per variant, corrected t-tests between variants and probability comparisons."""
    per_variant = {}
    probs = {}
    roc_rows = []
    for name in plan.variants:
        per_seed = []
        for seed in plan.seeds:
            _, test = datasets[seed, name]
            model = models[seed, name]
            p_fail = model.failure_probability(test.X)
            probs[seed, name] = p_fail
            m = metrics_report(p_fail, test.y, model.threshold, plan.n_bootstrap, seed)
            per_seed.append({"seed": seed, "selected_C": model.C, "n_train": int(model.config.get("n_train", 0)),
                             "n_test": len(test), **m.to_dict()})
            if out is not None:
                pred_dir = out / f"seed_{seed}" / "predictions"
                pred_dir.mkdir(parents=True, exist_ok=True)
                _write_predictions(pred_dir / f"{name}.tsv", test, p_fail)
            thr, fpr, tpr = roc_points(p_fail, test.y)
            roc_rows.extend((seed, name, t, f, r) for t, f, r in zip(thr, fpr, tpr))
        per_variant[name] = {
            "per_seed": per_seed,
            **{k: _aggregate([s[k] for s in per_seed]) for k in ("auc", "accuracy", "recall", "specificity")},
        }

    comparisons = []
    for a, b in plan.comparison_pairs():
        diffs = [per_variant[b]["auc"]["per_seed"][i] - per_variant[a]["auc"]["per_seed"][i]
                 for i in range(len(plan.seeds))]
        entry = {"variant": a, "reference": b, "auc_differences": diffs,
                 "mean_difference": float(np.mean(diffs))}
        if len(diffs) >= 2:
            n_train = float(np.mean([s["n_train"] for s in per_variant[b]["per_seed"]]))
            n_test = float(np.mean([s["n_test"] for s in per_variant[b]["per_seed"]]))
            nb = nadeau_bengio_test(diffs, n_train, n_test)
            entry["nadeau_bengio"] = {"t": nb.t_stat, "df": nb.df, "p_value": nb.p_value,
                                      "correction": nb.correction_factor, "degenerate": nb.degenerate}
        else:
            entry["nadeau_bengio"] = None
        comparisons.append(entry)

    matrix = {}
    if len(plan.seeds) >= 2:
        for a in plan.variants:
            for b in plan.variants:
                if a == b:
                    continue
                diffs = [x - y for x, y in zip(per_variant[a]["auc"]["per_seed"], per_variant[b]["auc"]["per_seed"])]
                n_train = float(np.mean([s["n_train"] for s in per_variant[a]["per_seed"]]))
                n_test = float(np.mean([s["n_test"] for s in per_variant[a]["per_seed"]]))
                matrix.setdefault(a, {})[b] = nadeau_bengio_test(diffs, n_train, n_test).p_value

    prob_tables = []
    for scope in (Scope.PARTIAL, Scope.FULL):
        h, nh = f"{scope.value}_History_Weighted", f"{scope.value}_No-history_Non-weighted"
        if h not in plan.variants or nh not in plan.variants:
            continue
        for seed in plan.seeds:
            _, t_h = datasets[seed, h]
            _, t_nh = datasets[seed, nh]
            if t_h.therapy_ids != t_nh.therapy_ids:
                raise DataError(f"{h} and {nh} test rows differ")
            res = compare_probability_distributions(probs[seed, h], probs[seed, nh], t_h.y, t_h.has_history)
            prob_tables.append({"history_model": h, "no_history_model": nh, "seed": seed, **res})

    if out is not None:
        with open(out / "roc_points.tsv", "w", encoding="utf-8") as fh:
            fh.write("seed\tvariant\tthreshold\tfpr\ttpr\n")
            for seed, name, t, f, r in roc_rows:
                fh.write(f"{seed}\t{name}\t{t:.17g}\t{f:.17g}\t{r:.17g}\n")

    return {"plan": plan.to_dict(), "variants": per_variant, "comparisons": comparisons,
            "nb_p_value_matrix": matrix,
            "probability_comparisons": prob_tables}


def variant_auc(result: ExperimentResult, seed: int, name: str) -> float:
    """Test AUC of one trained variant."""
    _, test = result.datasets[seed, name]
    return roc_auc(result.models[seed, name].failure_probability(test.X), test.y)

"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import _jsonio
from .config import build_dataclass, load_config, section
from .exceptions import ConfigurationError, DataError, NumericError
from .experiment import (PERSISTENCE_FILE, STAGES, ExperimentPlan, _write_labels, evaluate,
                         run_experiment)
from .features import (DatasetVariant, LabeledDataset, build_dataset, make_pairs, mutation_universe,
                       split_patients)
from .ingest import eligible_pairs, load_cohort, load_stanford_table, write_cohort, write_stanford_table
from .learner import SvmModel, fit_final, random_search_cv
from .persistence import PersistenceModel, build_persistence_model
from .ranking import composite_ranking, elbow_select, write_ranking, write_scree
from .synth import SynthConfig, generate_cohort

logger = logging.getLogger("retropredict")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- shared helpers -------------------------------------------------------------

def _config(args) -> dict:
    return load_config(args.config) if args.config else {}


def _threads(args) -> int:
    return (os.cpu_count() or 1) if args.threads == 0 else args.threads


def _out(args) -> Path:
    if args.out is None:
        raise ConfigurationError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _table(args, cfg):
    path = args.scores or cfg.get("scores")
    if path is None and args.data:
        path = Path(args.data) / "stanford_scores.tsv"
    if path is None:
        raise ConfigurationError("a resistance score table is required (--scores)")
    return load_stanford_table(path)


def _cohort(args, cfg):
    if not args.data:
        raise ConfigurationError("--data is required")
    return load_cohort(args.data, vl_floor=float(cfg.get("ingest.vl_floor", 20.0)))


def _plan(args, cfg) -> ExperimentPlan:
    values = section(cfg, "plan")
    if args.seed is not None:
        values["seeds"] = (args.seed,)
    values["n_jobs"] = _threads(args)
    return build_dataclass(ExperimentPlan, values, "plan")


def _variants(args, cfg) -> list:
    if getattr(args, "variant", None):
        return [DatasetVariant.parse(v).name for v in args.variant]
    return list(_plan(args, cfg).variants)


def _seed(args, default=0) -> int:
    return default if args.seed is None else args.seed


# --- subcommands ----------------------------------------------------------------

def cmd_simulate(args):
    cfg = _config(args)
    values = section(cfg, "synth")
    if args.seed is not None:
        values["seed"] = args.seed
    config = build_dataclass(SynthConfig, values, "synth")
    config.validate()
    syn = generate_cohort(config, _out(args))
    logger.info("simulated %d patients, %d therapies", len(syn.cohort.patients), len(syn.cohort.therapies))


def cmd_ingest(args):
    cfg = _config(args)
    cohort = _cohort(args, cfg)
    table = _table(args, cfg)
    out = _out(args)
    write_cohort(cohort, out)
    write_stanford_table(table, out / "stanford_scores.tsv")
    _jsonio.dump({"patients": len(cohort.patients), "therapies": len(cohort.therapies),
                  "genotypes": sum(len(v) for v in cohort.genotypes.values()),
                  "viral_loads": sum(len(v) for v in cohort.viral_loads.values()),
                  **asdict(cohort.report)}, out / "ingest_report.json")


def cmd_label(args):
    cfg = _config(args)
    cohort = _cohort(args, cfg)
    _write_labels(cohort, eligible_pairs(cohort), _out(args) / "labels.tsv")


def cmd_fit_persistence(args):
    cfg = _config(args)
    cohort = _cohort(args, cfg)
    plan = _plan(args, cfg)
    model = build_persistence_model(cohort, _table(args, cfg), plan.k_per_class, plan.cluster_seed,
                                    plan.use_centroids, plan.fallback_bounds)
    model.save(_out(args) / PERSISTENCE_FILE)


def _persistence(args, cohort, table, plan):
    if args.persistence:
        return PersistenceModel.load(args.persistence)
    return build_persistence_model(cohort, table, plan.k_per_class, plan.cluster_seed,
                                   plan.use_centroids, plan.fallback_bounds)


def cmd_weights(args):
    cfg = _config(args)
    cohort = _cohort(args, cfg)
    table = _table(args, cfg)
    plan = _plan(args, cfg)
    pairs = make_pairs(cohort, eligible_pairs(cohort))
    if not pairs:
        raise DataError("no therapy qualifies as a patient-therapy pair")
    ds = build_dataset(cohort, pairs, _persistence(args, cohort, table, plan), table,
                       DatasetVariant.parse("Full_History_Weighted"),
                       min_over_same_gene_class_only=plan.min_over_same_gene_class_only)
    out = _out(args)
    ds.save(out / "dataset")
    (out / "weights.tsv").write_bytes((out / "dataset" / "weights.tsv").read_bytes())


def cmd_build_datasets(args):
    cfg = _config(args)
    cohort = _cohort(args, cfg)
    table = _table(args, cfg)
    plan = _plan(args, cfg)
    seed = _seed(args, plan.seeds[0])
    pairs = make_pairs(cohort, eligible_pairs(cohort))
    if not pairs:
        raise DataError("no therapy qualifies as a patient-therapy pair")
    persistence = _persistence(args, cohort, table, plan)
    universe = mutation_universe(pairs)
    train_patients = split_patients([p.therapy.patient_id for p in pairs], plan.train_fraction, seed)
    out = _out(args)
    _jsonio.dump({"seed": seed, "train_patients": sorted(train_patients)}, out / "split.json")
    for name in _variants(args, cfg):
        ds = build_dataset(cohort, pairs, persistence, table, DatasetVariant.parse(name), universe=universe,
                           train_patients=train_patients,
                           min_over_same_gene_class_only=plan.min_over_same_gene_class_only)
        mask = np.array([p in train_patients for p in ds.patient_ids])
        ds.subset(mask).save(out / name / "train")
        ds.subset(~mask).save(out / name / "test")


def _dataset_dir(path, part="train") -> Path:
    path = Path(path)
    return path / part if (path / part / "meta.json").exists() else path


def cmd_train(args):
    cfg = _config(args)
    if not args.dataset_dir:
        raise ConfigurationError("--dataset-dir is required")
    plan = _plan(args, cfg)
    seed = _seed(args)
    train = LabeledDataset.load(_dataset_dir(args.dataset_dir))
    name = train.variant.name if train.variant is not None else (args.variant or ["unknown"])[0]
    n_candidates = args.candidates or plan.n_candidates
    selected, results = random_search_cv(train.X, train.y, train.groups, n_candidates, seed, args.folds,
                                         args.repeats, plan.alpha, _threads(args), plan.svm_params)
    est = fit_final(train.X, train.y, train.groups, selected, seed, plan.svm_params)
    config = {"variant": name, "seed": seed, "selected_C": selected, "n_candidates": n_candidates,
              "n_folds": args.folds, "n_repeats": args.repeats, "alpha": plan.alpha,
              "svm_params": plan.svm_params, "n_train": len(train)}
    model = SvmModel.from_estimator(est, train.feature_names, train.n_mutations, config, results)
    out = Path(args.out or "model.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{name}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)


def cmd_evaluate(args):
    cfg = _config(args)
    if not (args.dataset_dir and args.models_dir):
        raise ConfigurationError("--dataset-dir and --models-dir are required")
    seed = _seed(args)
    names = _variants(args, cfg) if args.variant else sorted(
        p.stem for p in Path(args.models_dir).glob("*.json"))
    if not names:
        raise DataError(f"no models found in {args.models_dir}")
    values = section(cfg, "plan")
    values.update({"variants": tuple(names), "seeds": (seed,)})
    plan = build_dataclass(ExperimentPlan, values, "plan")
    datasets, models = {}, {}
    for name in names:
        root = Path(args.dataset_dir) / name
        datasets[seed, name] = (LabeledDataset.load(root / "train"), LabeledDataset.load(root / "test"))
        models[seed, name] = SvmModel.load(Path(args.models_dir) / f"{name}.json")
    out = _out(args)
    _jsonio.dump(evaluate(plan, datasets, models, out), out / "report.json")


def cmd_rank(args):
    if not (args.model and args.dataset_dir):
        raise ConfigurationError("--model and --dataset-dir are required")
    model = SvmModel.load(args.model)
    train = LabeledDataset.load(_dataset_dir(args.dataset_dir))
    entries = composite_ranking(model, train.mutation_universe, train.weight_records)
    values = [e.ranking_value for e in entries]
    cutoff = elbow_select(values)
    out = _out(args)
    write_ranking(entries, cutoff, out / "ranking.tsv")
    write_scree(values, out / "scree.tsv")


def cmd_run_all(args):
    cfg = _config(args)
    plan = _plan(args, cfg)
    if not args.data:
        raise ConfigurationError("--data is required")
    run_experiment(plan, args.data, args.scores or cfg.get("scores"), _out(args), resume=args.resume,
                   stop_after=args.stop_after)


COMMANDS = {
    "simulate": (cmd_simulate, "generate a synthetic cohort with planted truth"),
    "ingest": (cmd_ingest, "validate cohort files and write them normalized"),
    "label": (cmd_label, "label every therapy (labels.tsv)"),
    "fit-persistence": (cmd_fit_persistence, "fit mutation persistence curves"),
    "weights": (cmd_weights, "dump per-mutation weights (weights.tsv)"),
    "build-datasets": (cmd_build_datasets, "assemble dataset variants with a patient split"),
    "train": (cmd_train, "random search, CV and calibrated refit of one variant"),
    "evaluate": (cmd_evaluate, "metrics, significance tests and ROC points"),
    "rank": (cmd_rank, "composite mutation ranking with elbow cutoff"),
    "run-all": (cmd_run_all, "run the whole protocol with resumable stages"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output directory (train: model file)")
    common.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores")
    common.add_argument("--data", help="directory with the cohort TSV files")
    common.add_argument("--scores", help="resistance score table (default: DATA/stanford_scores.tsv)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="retropredict", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("fit-persistence", "weights", "build-datasets"):
            p.add_argument("--persistence", help="reuse a fitted persistence model file")
        if name in ("build-datasets", "train", "evaluate"):
            p.add_argument("--variant", action="append", help="dataset variant (repeatable)")
        if name in ("train", "evaluate", "rank"):
            p.add_argument("--dataset-dir", help="dataset directory")
        if name == "train":
            p.add_argument("--candidates", type=int, help="number of random-search candidates")
            p.add_argument("--folds", type=int, default=5)
            p.add_argument("--repeats", type=int, default=5)
        if name == "evaluate":
            p.add_argument("--models-dir", help="directory of <variant>.json models")
        if name == "rank":
            p.add_argument("--model", help="trained model file")
        if name == "run-all":
            p.add_argument("--resume", action="store_true", help="reuse completed stages")
            p.add_argument("--stop-after", choices=STAGES, help="last stage to run")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 0:
        parser.error("--threads must be >= 0")
    try:
        COMMANDS[args.command][0](args)
    except ConfigurationError as exc:
        print(f"retropredict: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"retropredict: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"retropredict: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

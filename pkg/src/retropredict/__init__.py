"""Therapy-outcome prediction from temporally weighted resistance mutations."""
from .domain import DrugClass, MutationId, Outcome, parse_mutation, render_mutation
from .experiment import ExperimentPlan, run_experiment
from .features import DatasetVariant, LabeledDataset, build_dataset
from .ingest import Cohort, load_cohort, load_stanford_table
from .learner import CalibratedLinearSVM, PlattCalibrator, RandomSearchSVM, SvmModel
from .persistence import PersistenceModel, build_persistence_model
from .svm import LinearSVM
from .synth import SynthConfig, generate_cohort

__version__ = "0.1.0"

__all__ = [
    "CalibratedLinearSVM", "Cohort", "DatasetVariant", "DrugClass", "ExperimentPlan", "LabeledDataset",
    "LinearSVM", "MutationId", "Outcome", "PersistenceModel", "PlattCalibrator", "RandomSearchSVM",
    "SvmModel", "SynthConfig", "build_dataset", "build_persistence_model", "generate_cohort",
    "load_cohort", "load_stanford_table", "parse_mutation", "render_mutation", "run_experiment",
]

import sys
from pathlib import Path

import pytest

from retropredict.ingest import load_cohort, load_stanford_table
from retropredict.synth import SynthConfig, generate_cohort

TOY = Path(__file__).parent / "data" / "toy"


@pytest.fixture
def toy_dir():
    return TOY


@pytest.fixture
def toy_cohort():
    return load_cohort(TOY)


@pytest.fixture
def toy_table():
    return load_stanford_table(TOY / "stanford_scores.tsv")


@pytest.fixture(scope="session")
def small_synth():
    """A few hundred simulated patients, enough for every stage to have data."""
    return generate_cohort(SynthConfig(n_patients=200, seed=11))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])

import shutil

import pytest

from retropredict.domain import GenotypeTest, Outcome, Therapy, ViralLoadMeasurement, parse_mutation, to_day
from retropredict.exceptions import (
    DataError,
    DuplicateRecord,
    MalformedRecord,
    OffScaleScore,
    ReferentialIntegrity,
    UnknownDrug,
)
from retropredict.ingest import (
    SCALE_NORM,
    Reason,
    build_cohort,
    eligible_pairs,
    load_cohort,
    load_stanford_table,
    write_cohort,
    write_stanford_table,
)


@pytest.fixture
def toy_copy(toy_dir, tmp_path):
    dst = tmp_path / "toy"
    shutil.copytree(toy_dir, dst)
    return dst


def _append(path, line):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def test_toy_fixture_shape(toy_cohort):
    assert toy_cohort.patients == ("P1", "P2", "P3")
    assert len(toy_cohort.therapies) == 5
    assert toy_cohort.report.vl_clamped == 0


def test_genotypes_sorted_and_parsed(toy_cohort):
    g = toy_cohort.patient_genotypes("P1")
    assert [x.sample_date for x in g] == sorted(x.sample_date for x in g)
    assert parse_mutation("PR90M") in g[0].mutations


def test_vl_zero_clamped(toy_copy):
    _append(toy_copy / "viral_loads.tsv", "P3\t2017-08-01\t0")
    cohort = load_cohort(toy_copy)
    assert cohort.report.vl_clamped == 1
    assert min(v.copies_per_ml for v in cohort.patient_viral_loads("P3")) == 20.0


def test_negative_vl_rejected(toy_copy):
    _append(toy_copy / "viral_loads.tsv", "P3\t2017-08-01\t-5")
    with pytest.raises(MalformedRecord):
        load_cohort(toy_copy)


def test_unknown_patient_in_therapies(toy_copy):
    _append(toy_copy / "therapies.tsv", "P9\tP9-T1\t2017-01-01\t\t3TC;ABC;DTG")
    with pytest.raises(ReferentialIntegrity) as err:
        load_cohort(toy_copy)
    assert "therapies.tsv:" in str(err.value)


def test_unknown_patient_in_genotypes(toy_copy):
    _append(toy_copy / "genotypes.tsv", "P9\t2017-01-01\tRTM184V")
    with pytest.raises(ReferentialIntegrity):
        load_cohort(toy_copy)


def test_duplicate_therapy_id(toy_copy):
    _append(toy_copy / "therapies.tsv", "P3\tP3-T1\t2018-01-01\t\t3TC;ABC;DTG")
    with pytest.raises(DuplicateRecord):
        load_cohort(toy_copy)


def test_unknown_drug_in_therapy(toy_copy):
    _append(toy_copy / "therapies.tsv", "P3\tP3-T9\t2018-01-01\t\t3TC;XYZ")
    with pytest.raises(UnknownDrug):
        load_cohort(toy_copy)


def test_bad_date(toy_copy):
    _append(toy_copy / "viral_loads.tsv", "P3\t2017-13-01\t100")
    with pytest.raises(MalformedRecord):
        load_cohort(toy_copy)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_cohort(tmp_path)


def test_missing_column(toy_copy):
    (toy_copy / "patients.tsv").write_text("id\nP1\n")
    with pytest.raises(MalformedRecord):
        load_cohort(toy_copy)


def test_same_day_records_merged():
    t = Therapy("P", "T", 100, None, frozenset({"3TC"}))
    a, b = parse_mutation("RT184V"), parse_mutation("PR90M")
    cohort = build_cohort(["P"], [t], [GenotypeTest("P", 50, frozenset({a})), GenotypeTest("P", 50, frozenset({b}))],
                          [ViralLoadMeasurement("P", 10, 100.0), ViralLoadMeasurement("P", 10, 10000.0)])
    assert cohort.patient_genotypes("P")[0].mutations == {a, b}
    assert cohort.patient_viral_loads("P")[0].copies_per_ml == pytest.approx(1000.0)
    assert cohort.report.merged_genotypes == 1
    assert cohort.report.merged_viral_loads == 1


def test_cohort_roundtrip(toy_cohort, tmp_path):
    write_cohort(toy_cohort, tmp_path)
    again = load_cohort(tmp_path)
    assert again == toy_cohort


# --- score table ---------------------------------------------------------------

def test_score_row_parsed(toy_table):
    assert toy_table.score(parse_mutation("RTM184V"), "3TC") == 60


def test_unlisted_pair_scores_zero(toy_table):
    assert toy_table.score(parse_mutation("RTM184V"), "DTG") == 0
    assert toy_table.score(parse_mutation("IN66I"), "DTG") == 0


def test_off_scale_score(tmp_path):
    p = tmp_path / "s.tsv"
    p.write_text("mutation\tdrug\tscore\nRTM184V\t3TC\t37\n")
    with pytest.raises(OffScaleScore):
        load_stanford_table(p)


def test_conflicting_scores(tmp_path):
    p = tmp_path / "s.tsv"
    p.write_text("mutation\tdrug\tscore\nRTM184V\t3TC\t60\nRT184V\t3TC\t55\n")
    with pytest.raises(DuplicateRecord):
        load_stanford_table(p)


def test_scale_norm(toy_table):
    assert SCALE_NORM == pytest.approx(128.8410, abs=1e-4)
    assert toy_table.norm == pytest.approx(SCALE_NORM)


def test_table_roundtrip(toy_table, tmp_path):
    write_stanford_table(toy_table, tmp_path / "s.tsv")
    assert load_stanford_table(tmp_path / "s.tsv").scores == toy_table.scores


# --- eligibility ---------------------------------------------------------------

def test_toy_eligibility(toy_cohort):
    el = eligible_pairs(toy_cohort)
    accepted = {t.therapy_id: lab.value for t, lab in el.accepted}
    assert accepted == {"P1-T1": Outcome.SUCCESS, "P1-T2": Outcome.FAILURE, "P2-T2": Outcome.SUCCESS}
    rejected = {t.therapy_id: (reason, detail) for t, reason, detail in el.rejected}
    assert rejected["P3-T1"] == (Reason.NO_BASELINE_GENOTYPE, "")
    assert rejected["P2-T1"] == (Reason.NO_STANDARD_DATUM, "StopUnder4")


def test_only_week_30_vl_rejected():
    t = Therapy("P", "T", 1000, 1000 + 40 * 7, frozenset({"3TC", "DTG"}))
    cohort = build_cohort(["P"], [t], [GenotypeTest("P", 900, frozenset())],
                          [ViralLoadMeasurement("P", 880, 1e4), ViralLoadMeasurement("P", 950, 1e4),
                           ViralLoadMeasurement("P", 1000 + 30 * 7, 30.0)])
    (_, reason, detail), = eligible_pairs(cohort).rejected
    assert (reason, detail) == (Reason.NO_STANDARD_DATUM, "NoFollowUpVL")


def test_unbracketed_genotype_rejected():
    t = Therapy("P", "T", 1000, None, frozenset({"3TC", "DTG"}))
    # no VL strictly before the genotype date
    cohort = build_cohort(["P"], [t], [GenotypeTest("P", 900, frozenset())],
                          [ViralLoadMeasurement("P", 900, 1e4), ViralLoadMeasurement("P", 1168, 30.0)])
    (_, reason, _), = eligible_pairs(cohort).rejected
    assert reason == Reason.NO_VL_BRACKET


def test_genotype_on_start_day_is_not_prior():
    t = Therapy("P", "T", to_day("2015-01-01"), None, frozenset({"3TC", "DTG"}))
    cohort = build_cohort(["P"], [t], [GenotypeTest("P", t.start_date, frozenset())],
                          [ViralLoadMeasurement("P", t.start_date - 5, 1e4)])
    (_, reason, _), = eligible_pairs(cohort).rejected
    assert reason == Reason.NO_BASELINE_GENOTYPE

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from retropredict.domain import DrugClass, GenotypeTest, Therapy, ViralLoadMeasurement, parse_mutation
from retropredict.exceptions import ConfigurationError, DegenerateFit
from retropredict.ingest import StanfordScoreTable, build_cohort
from retropredict.persistence import (
    PersistenceModel,
    PersistenceObservations,
    Provenance,
    SigmoidParams,
    SigmoidPersistence,
    build_persistence_model,
    cluster_params,
    extract_observations,
    fit_sigmoid,
    mutation_class,
)

PR90M = parse_mutation("PR90M")


def _obs(x, y):
    return PersistenceObservations(PR90M, np.asarray(x, float), np.asarray(y, int))


def _off_pi_cohort(offsets=(20, 50, 250, 347, 500, 1000), present=4):
    """One patient on a PI for 100 days, then off PI with genotypes at ``offsets``."""
    on = Therapy("P", "T1", 0, 100, frozenset({"3TC", "TDF", "DRV"}))
    off = Therapy("P", "T2", 101, None, frozenset({"3TC", "TDF", "EFV"}))
    grts = [GenotypeTest("P", 50, frozenset({PR90M}))]
    for i, dx in enumerate(offsets):
        grts.append(GenotypeTest("P", 100 + dx, frozenset({PR90M}) if i < present else frozenset()))
    vls = [ViralLoadMeasurement("P", d, 1000.0) for d in (0, 1200)]
    return build_cohort(["P"], [on, off], grts, vls)


def test_worked_observation_example():
    obs = extract_observations(_off_pi_cohort(), DrugClass.PI)[PR90M]
    assert obs.x.tolist() == [20, 50, 250, 347, 500, 1000]
    assert obs.y.tolist() == [1, 1, 1, 1, 0, 0]


def test_continuous_pi_gives_no_observations():
    t = Therapy("P", "T1", 0, None, frozenset({"3TC", "TDF", "DRV"}))
    grts = [GenotypeTest("P", d, frozenset({PR90M})) for d in (50, 300, 600)]
    cohort = build_cohort(["P"], [t], grts, [ViralLoadMeasurement("P", 0, 1e3)])
    assert extract_observations(cohort, DrugClass.PI) == {}


def test_mutations_in_every_later_genotype_give_all_ones():
    obs = extract_observations(_off_pi_cohort(present=6), DrugClass.PI)[PR90M]
    assert obs.y.tolist() == [1] * 6


def test_nrti_extraction_refused():
    with pytest.raises(ValueError):
        extract_observations(_off_pi_cohort(), DrugClass.NRTI)


def test_fit_separated_example():
    p = fit_sigmoid(_obs([10, 10, 1000, 1000], [1, 1, 0, 0]))
    assert p(10) > 0.9 and p(1000) < 0.1 and p.beta > 0
    nll_grid = oracles.grid_min_nll([10, 10, 1000, 1000], [1, 1, 0, 0])[0]
    assert oracles.sigmoid_nll(p.alpha, p.beta, [10, 10, 1000, 1000], [1, 1, 0, 0]) <= nll_grid + 1e-6


@pytest.mark.parametrize("x,y", [([10, 20, 30], [1, 1, 1]), ([100], [0]), ([5, 6], [0, 0])])
def test_degenerate_fits(x, y):
    with pytest.raises(DegenerateFit):
        fit_sigmoid(_obs(x, y))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_fit_not_worse_than_grid(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 40))
    x = np.sort(rng.integers(1, 1500, n)).astype(float)
    y = (rng.random(n) < 1 / (1 + np.exp(-3 + 0.01 * x))).astype(int)
    if y.min() == y.max():
        y[0], y[-1] = 1, 0
    p = fit_sigmoid(_obs(x, y))
    assert -20 <= p.alpha <= 20 and 0 <= p.beta <= 1
    assert oracles.sigmoid_nll(p.alpha, p.beta, x, y) <= oracles.grid_min_nll(x, y)[0] + 1e-6


def test_estimator_api():
    est = SigmoidPersistence().fit([10, 10, 1000, 1000], [1, 1, 0, 0])
    assert est.predict_proba([10])[0] > 0.9


def test_sigmoid_params_validation():
    with pytest.raises(ValueError):
        SigmoidParams(0.0, -0.1)
    with pytest.raises(ValueError):
        SigmoidParams(float("nan"), 0.1)


# --- clustering ------------------------------------------------------------------

def test_cluster_example():
    pts = [(0, 0), (0.1, 0), (10, 10), (10.1, 10)]
    res = cluster_params(pts, 2, seed=0)
    assert np.allclose(sorted(map(tuple, res.centroids)), [(0.05, 0), (10.05, 10)])


def test_k_one_is_mean():
    pts = np.array([(1, 2), (3, 5), (8, 1)], dtype=float)
    assert np.allclose(cluster_params(pts, 1).centroids[0], pts.mean(axis=0))


def test_k_equals_n():
    pts = np.array([(1, 2), (3, 5), (8, 1)], dtype=float)
    res = cluster_params(pts, 3)
    assert res.inertia == pytest.approx(0.0, abs=1e-12)
    assert sorted(map(tuple, res.centroids)) == sorted(map(tuple, pts))


def test_invalid_k():
    with pytest.raises(ValueError):
        cluster_params([(0, 0), (1, 1)], 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_two_means_match_exhaustive_partition(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    pts = np.vstack([rng.normal(0, 1, (n, 2)), rng.normal(6, 1, (n, 2))]) * [1.0, 0.01]
    res = cluster_params(pts, 2, seed=seed)
    z = res.standardization.transform(pts)
    best_sse, _ = oracles.best_two_partition_sse(z)
    assert res.inertia == pytest.approx(best_sse, rel=1e-9, abs=1e-12)


def test_clustering_independent_of_input_order():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(20, 2))
    a = cluster_params(pts, 3, seed=1)
    b = cluster_params(pts[::-1], 3, seed=1)
    assert np.allclose(a.centroids, b.centroids)
    assert np.array_equal(a.labels, b.labels[::-1])


# --- model -----------------------------------------------------------------------

def test_rt_attribution_by_scores():
    m = parse_mutation("RT184V")
    nrti = StanfordScoreTable({(m, "3TC"): 60, (m, "EFV"): 10})
    nnrti = StanfordScoreTable({(m, "3TC"): 10, (m, "EFV"): 60})
    assert mutation_class(m, nrti) is DrugClass.NRTI
    assert mutation_class(m, nnrti) is DrugClass.NNRTI
    assert mutation_class(m) is DrugClass.NNRTI
    assert mutation_class(PR90M) is DrugClass.PI
    assert mutation_class(parse_mutation("IN66I")) is DrugClass.INI


def test_nrti_mutations_get_hyperparameters(small_synth):
    model = build_persistence_model(small_synth.cohort, small_synth.table, seed=0)
    nrti = model.per_class[DrugClass.NRTI]
    assert nrti.params
    assert all(p.provenance is Provenance.HYPERPARAMETER for p in nrti.params.values())
    lo_a, hi_a, lo_b, hi_b = nrti.fallback_range
    assert all(lo_a <= p.alpha <= hi_a and lo_b <= p.beta <= hi_b for p in nrti.params.values())


def test_every_cohort_mutation_has_params(small_synth):
    model = build_persistence_model(small_synth.cohort, small_synth.table, seed=0)
    for m in small_synth.cohort.mutation_universe():
        assert m in model
        assert model.params(m).beta >= 0


def test_model_reproducible_and_roundtrip(small_synth, tmp_path):
    a = build_persistence_model(small_synth.cohort, small_synth.table, seed=4)
    b = build_persistence_model(small_synth.cohort, small_synth.table, seed=4)
    a.save(tmp_path / "a.json")
    b.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    again = PersistenceModel.load(tmp_path / "a.json")
    again.save(tmp_path / "c.json")
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "a.json").read_bytes()


def test_centroid_mode(small_synth):
    model = build_persistence_model(small_synth.cohort, small_synth.table, seed=0, use_centroids=True)
    pi = model.per_class[DrugClass.PI]
    centroid_params = {(round(a, 9), round(max(b, 0.0), 9)) for a, b in pi.centroids}
    for p in pi.params.values():
        if p.provenance is Provenance.CLUSTER_CENTROID:
            assert (round(p.alpha, 9), round(p.beta, 9)) in centroid_params


def test_empty_cohort():
    t = Therapy("P", "T", 0, None, frozenset({"3TC"}))
    cohort = build_cohort(["P"], [t], [GenotypeTest("P", -5, frozenset())], [])
    with pytest.raises(ConfigurationError):
        build_persistence_model(cohort)


def test_unfittable_class_needs_bounds():
    # a PR mutation that is never followed off-PI, and no other class fits
    t = Therapy("P", "T", 0, None, frozenset({"3TC", "TDF", "DRV"}))
    cohort = build_cohort(["P"], [t], [GenotypeTest("P", -5, frozenset({PR90M}))], [])
    with pytest.raises(ConfigurationError):
        build_persistence_model(cohort)
    model = build_persistence_model(cohort, fallback_bounds=(-1.0, 1.0, 0.0, 0.01))
    p = model.params(PR90M)
    assert p.provenance is Provenance.HYPERPARAMETER
    assert -1 <= p.alpha <= 1 and 0 <= p.beta <= 0.01

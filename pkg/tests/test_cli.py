import json
import shutil

import pytest

from retropredict.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main

PLAN = """synth.n_patients = 120
synth.seed = 2
plan.variants = ("Full_History_Weighted", "Full_No-history_Non-weighted")
plan.seeds = (0, 1)
plan.n_candidates = 2
plan.n_bootstrap = 0
plan.svm_params = {"max_iter": 200}
"""


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "run.cfg").write_text(PLAN)
    assert main(["simulate", "--config", str(root / "run.cfg"), "--out", str(root / "data")]) == EXIT_OK
    return root


def _files(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_simulate_writes_cohort(sim):
    names = {p.name for p in (sim / "data").iterdir()}
    assert {"patients.tsv", "therapies.tsv", "genotypes.tsv", "viral_loads.tsv",
            "stanford_scores.tsv", "truth.json"} <= names
    truth = json.loads((sim / "data" / "truth.json").read_text())
    assert truth["config"]["n_patients"] == 120


def test_run_all_twice_identical(sim, tmp_path):
    args = ["run-all", "--config", str(sim / "run.cfg"), "--data", str(sim / "data")]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert "report.json" in a and "ranking.tsv" in a
    assert a == b


def test_run_all_resume(sim, tmp_path):
    args = ["run-all", "--config", str(sim / "run.cfg"), "--data", str(sim / "data"), "--out", str(tmp_path)]
    assert main(args + ["--stop-after", "fit-persistence"]) == EXIT_OK
    assert not (tmp_path / "report.json").exists()
    assert main(args + ["--resume"]) == EXIT_OK
    assert (tmp_path / "report.json").exists()


def test_stage_commands_chain(sim, tmp_path):
    common = ["--config", str(sim / "run.cfg"), "--data", str(sim / "data")]
    assert main(["label", *common, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "labels.tsv").read_text().startswith("therapy_id")
    assert main(["fit-persistence", *common, "--out", str(tmp_path)]) == EXIT_OK
    pers = str(tmp_path / "persistence_model.json")
    assert main(["weights", *common, "--persistence", pers, "--out", str(tmp_path / "w")]) == EXIT_OK
    assert (tmp_path / "w" / "weights.tsv").exists()
    assert main(["build-datasets", *common, "--persistence", pers, "--seed", "0",
                 "--out", str(tmp_path / "ds")]) == EXIT_OK
    for name in ("Full_History_Weighted", "Full_No-history_Non-weighted"):
        assert main(["train", "--config", str(sim / "run.cfg"), "--dataset-dir", str(tmp_path / "ds" / name),
                     "--candidates", "2", "--out", str(tmp_path / "models")]) == EXIT_OK
    assert main(["evaluate", "--config", str(sim / "run.cfg"), "--dataset-dir", str(tmp_path / "ds"),
                 "--models-dir", str(tmp_path / "models"), "--out", str(tmp_path / "eval")]) == EXIT_OK
    report = json.loads((tmp_path / "eval" / "report.json").read_text())
    assert len(report["comparisons"]) == 1
    assert main(["rank", "--model", str(tmp_path / "models" / "Full_History_Weighted.json"),
                 "--dataset-dir", str(tmp_path / "ds" / "Full_History_Weighted"),
                 "--out", str(tmp_path / "rank")]) == EXIT_OK
    assert (tmp_path / "rank" / "scree.tsv").exists()


def test_configuration_errors(sim, tmp_path, capsys):
    assert main(["run-all", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["simulate", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == EXIT_USAGE
    (tmp_path / "bad.cfg").write_text("synth.colour = 3\n")
    assert main(["simulate", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "colour" in capsys.readouterr().err


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["label", "--threads", "-2", "--data", "x", "--out", "y"])
    assert exc.value.code == EXIT_USAGE


def test_data_error_exit_two(sim, tmp_path, capsys):
    bad = tmp_path / "bad"
    shutil.copytree(sim / "data", bad)
    with open(bad / "therapies.tsv", "a", encoding="utf-8") as fh:
        fh.write("P_nobody\tT_orphan\t2000-01-01\t2000-06-01\t3TC;TDF;DRV\n")
    assert main(["label", "--data", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert "unknown patient 'P_nobody'" in capsys.readouterr().err

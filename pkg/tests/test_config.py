import pytest

from retropredict.config import build_dataclass, load_config, parse_config, section
from retropredict.exceptions import ConfigurationError
from retropredict.experiment import ExperimentPlan
from retropredict.synth import SynthConfig

TEXT = """
# comment
synth.n_patients = 120
synth.beta_groups = (0.01, 0.1)
plan.variants = ("Full_History_Weighted",)
plan.svm_params = {"max_iter": 50}
scores = data/stanford scores.tsv
plan.use_centroids = True
"""


def test_parse_values():
    cfg = parse_config(TEXT)
    assert cfg["synth.n_patients"] == 120
    assert cfg["synth.beta_groups"] == (0.01, 0.1)
    assert cfg["plan.svm_params"] == {"max_iter": 50}
    assert cfg["scores"] == "data/stanford scores.tsv"
    assert cfg["plan.use_centroids"] is True


def test_sections_build_dataclasses():
    cfg = parse_config(TEXT)
    synth = build_dataclass(SynthConfig, section(cfg, "synth"), "synth")
    assert synth.n_patients == 120 and synth.seed == SynthConfig().seed
    plan = build_dataclass(ExperimentPlan, section(cfg, "plan"), "plan")
    assert plan.variants == ("Full_History_Weighted",) and plan.use_centroids


@pytest.mark.parametrize("text", ["no equals sign", " = 3", "a = 1\na = 2"])
def test_malformed(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_unknown_key():
    with pytest.raises(ConfigurationError, match="bogus"):
        build_dataclass(SynthConfig, {"bogus": 1}, "synth")


def test_bad_value():
    with pytest.raises(ConfigurationError):
        build_dataclass(ExperimentPlan, {"variants": ("Full_Sideways_Weighted",)}, "plan")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.cfg")
    (tmp_path / "c.cfg").write_text("synth.seed = 4\n")
    assert load_config(tmp_path / "c.cfg") == {"synth.seed": 4}

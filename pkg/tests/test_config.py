import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphhop.config import PROFILES, ConfigError, ExperimentConfig, expand_path


def test_defaults():
    cfg = ExperimentConfig.from_string("")
    assert cfg.run.variant == "full" and cfg.run.repeats == 5
    assert cfg.lp.alpha == 0.99
    assert cfg.graphhop.hops == 2 and cfg.graphhop.batch_size == 512


@pytest.mark.parametrize("profile,T,alpha,beta,hops,max_iter", [
    ("cora", 0.1, 10, 1, 2, 100),
    ("citeseer", 0.1, 10, 1, 2, 100),
    ("pubmed", 0.1, 1, 1, 2, 100),
    ("reddit", 1, 1, 0, 1, 200),
    ("ppi", 1, 1, 1, 1, 200),
    ("amazon2m", 1, 100, 100, 1, 200),
])
def test_profiles(profile, T, alpha, beta, hops, max_iter):
    g = ExperimentConfig.from_string(f"[run]\nprofile = {profile}\n").graphhop
    assert (g.T, g.alpha, g.beta, g.hops, g.max_iter) == (T, alpha, beta, hops, max_iter)


def test_explicit_key_beats_profile():
    cfg = ExperimentConfig.from_string("[run]\nprofile = cora\n[graphhop]\nalpha = 2.5\n")
    assert cfg.graphhop.alpha == 2.5 and cfg.graphhop.T == 0.1


def test_canonical_round_trip():
    text = "[run]\nprofile = pubmed\nseed = 3\n[graphhop]\ntau = 0.9\ninit_hops = 1\n"
    cfg = ExperimentConfig.from_string(text)
    again = ExperimentConfig.from_string(cfg.canonical())
    assert again == cfg
    assert again.canonical() == cfg.canonical()


@settings(max_examples=40, deadline=None)
@given(T=st.floats(0.01, 100), alpha=st.floats(0, 100), tau=st.floats(0, 0.99),
       seed=st.integers(0, 2**63), warm=st.booleans(),
       profile=st.sampled_from(sorted(PROFILES)))
def test_round_trip_property(T, alpha, tau, seed, warm, profile):
    cfg = ExperimentConfig.from_string(f"[run]\nprofile = {profile}\nseed = {seed}\n")
    cfg = dataclasses.replace(cfg, graphhop=cfg.graphhop.replace(T=T, alpha=alpha, tau=tau,
                                                                 warm_start=warm))
    assert ExperimentConfig.from_string(cfg.canonical()) == cfg


@pytest.mark.parametrize("text,field", [
    ("[graphhop]\nalpha = abc\n", "graphhop.alpha"),
    ("[graphhop]\nalhpa = 1\n", "graphhop.alhpa"),
    ("[nonsense]\nx = 1\n", "nonsense"),
    ("[run]\nvariant = III\n", "run.variant"),
    ("[run]\nprofile = imagenet\n", "run.profile"),
    ("[run]\nrepeats = 0\n", "run.repeats"),
    ("[graphhop]\ntau = 1.0\n", "graphhop"),
    ("[graphhop]\nwarm_start = maybe\n", "graphhop.warm_start"),
    ("[lp]\nalpha = 1.5\n", "lp"),
])
def test_field_level_errors(text, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_string(text)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_override():
    cfg = ExperimentConfig.from_string("")
    assert cfg.override("tau", "0.5").graphhop.tau == 0.5
    assert cfg.override("per_class", "3").split.per_class == 3
    assert cfg.override("lp.alpha", "0.5").lp.alpha == 0.5
    with pytest.raises(ConfigError):
        cfg.override("nothing", "1")


def test_paths_resolve_against_config_dir(tmp_path):
    ini = tmp_path / "sub" / "run.ini"
    ini.parent.mkdir()
    ini.write_text("[data]\npath = ../data/x\n")
    cfg = ExperimentConfig.load(ini)
    assert cfg.data_path() == tmp_path / "sub" / "../data/x"
    assert cfg.split_path() == tmp_path / "sub" / "../data/x" / "split.json"


def test_environment_relocates_paths(monkeypatch):
    monkeypatch.delenv("GH_TEST_DIR", raising=False)
    assert str(expand_path("${GH_TEST_DIR:-fallback}/a")) == "fallback/a"
    monkeypatch.setenv("GH_TEST_DIR", "/somewhere")
    assert str(expand_path("${GH_TEST_DIR:-fallback}/a")) == "/somewhere/a"
    monkeypatch.delenv("GH_TEST_DIR")
    with pytest.raises(ConfigError):
        expand_path("${GH_TEST_DIR}")

import dataclasses

import pytest

from shellmatch.config import SECTIONS, RunConfig
from shellmatch.errors import ConfigError


def test_defaults():
    c = RunConfig()
    assert (c.sigma, c.k_init, c.k_max, c.steps) == (0.5, 6, 500, 50)
    assert (c.n_proposals, c.sigma_match_sq, c.surrogate_vertices, c.surrogate_k_max) == (
        100, 1e-3, 1000, 20)
    assert c.extra_random == 8 and c.proposal_scale == 1.0


def test_every_field_has_a_section():
    keys = [k for ks in SECTIONS.values() for k in ks]
    assert sorted(keys) == sorted(f.name for f in dataclasses.fields(RunConfig))


def test_text_round_trip():
    c = RunConfig(sigma=0.25, mcmc=False, rigid="random", cache_dir="/tmp/x", arap_tol=1e-7)
    assert RunConfig.from_text(c.to_text()) == c


def test_partial_document_keeps_base():
    base = RunConfig(seed=3)
    c = RunConfig.from_text("[schedule]\nsteps = 7\n", base)
    assert c.steps == 7 and c.seed == 3


@pytest.mark.parametrize("text", [
    "[schedule]\nbogus = 1\n",
    "[nowhere]\nsteps = 2\n",
    "[schedule]\nsteps = many\n",
    "[mcmc]\nmcmc = maybe\n",
    "not an ini file",
])
def test_bad_documents(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


@pytest.mark.parametrize("change", [
    {"sigma": 0}, {"k_init": 1}, {"k_max": 6}, {"steps": 1}, {"w_spec": -1},
    {"w_spec": 0, "w_xyz": 0, "w_normal": 0}, {"lambda_arap": -1}, {"n_proposals": 0},
    {"sigma_match_sq": 0}, {"surrogate_k_max": 6}, {"proposal_scale": 0},
    {"rigid": "sometimes"}, {"smoothing": "box"}, {"threads": 0}, {"seed": -1},
])
def test_range_checks(change):
    with pytest.raises(ConfigError):
        RunConfig().replace(**change)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        RunConfig().replace(nonsense=1)
    with pytest.raises(ConfigError):
        RunConfig().with_strings({"nonsense": "1"})


def test_dotted_keys_and_coercion():
    c = RunConfig().with_strings({"alignment.lambda_arap": "2.5", "mcmc.include_initial": "no"})
    assert c.lambda_arap == 2.5 and c.include_initial is False


def test_save_load(tmp_path):
    c = RunConfig(seed=11)
    c.save(tmp_path / "c.ini")
    assert RunConfig.load(tmp_path / "c.ini") == c

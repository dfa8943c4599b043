import tomli
import pytest

from ergoflow.cli import fixtures
from ergoflow.config import dumps, load, loads
from ergoflow.errors import ConfigurationError, UnsupportedScaleError


@pytest.mark.parametrize("name", sorted(fixtures()))
def test_fixture_files_are_canonical(name):
    text = open(fixtures()[name]).read()
    assert dumps(tomli.loads(text)) == text


@pytest.mark.parametrize("name", ["thmA_kronecker", "suspension_transfer", "decomposition", "degree1_suspension"])
def test_round_trip(name):
    cfg = load(fixtures()[name])
    text = cfg.dumps()
    assert loads(text).dumps() == text


def test_unknown_keys_rejected():
    base = open(fixtures()["thmA_kronecker"]).read()
    with pytest.raises(ConfigurationError, match="unknown keys"):
        loads(base + "\nextra = 1\n")
    with pytest.raises(ConfigurationError, match="unknown keys"):
        loads(base.replace('form = "ThmA"', 'form = "ThmA"\nflavour = 2'))
    with pytest.raises(ConfigurationError, match="unknown keys"):
        loads(base.replace('kind = "torus_character"', 'kind = "torus_character"\nphase = 0.5', 1))


def test_invalid_values_rejected():
    base = open(fixtures()["thmA_kronecker"]).read()
    with pytest.raises(ConfigurationError):
        loads(base.replace('kind = "average"', 'kind = "mystery"'))
    with pytest.raises(ConfigurationError):
        loads(base.replace('rule', 'rule').replace("[quadrature]", '[quadrature]\nrule = "simpson"'))
    with pytest.raises(ConfigurationError):
        loads("name = [1\n")


def test_box_k5_unsupported_scale():
    with pytest.raises(UnsupportedScaleError, match="unsupported-scale"):
        load(fixtures()["box_k5"])


def test_seed_override(monkeypatch):
    cfg = load(fixtures()["decomposition"])
    assert cfg.effective_seed == 0
    monkeypatch.setenv("ERGOFLOW_SEED", "17")
    assert cfg.effective_seed == 17
    monkeypatch.setenv("ERGOFLOW_SEED", "x")
    with pytest.raises(ConfigurationError):
        cfg.effective_seed

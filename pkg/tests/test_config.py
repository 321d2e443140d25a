import pytest

from tdcrbench.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults():
    cfg = RunConfig()
    assert cfg.seed == 0 and cfg.collect.duration == 408.0 and cfg.collect.rate == 5.0
    assert cfg.controller.mpc.horizon == 5 and cfg.benchmark.trials == 5
    assert len(cfg.hash()) == 16


def test_overrides_and_hash_changes():
    cfg = parse_config("""
seed = 3
[plant]
load_g = 50.0
[plant.hysteresis]
lag = 0.08
[controller.mpc]
horizon = 3
q_weights = [1, 1, 1, 0.5, 0.5, 0.5]
[benchmark]
controllers = ["jacobian", "gru"]
""")
    assert cfg.seed == 3 and cfg.plant.load_g == 50.0 and cfg.plant.hysteresis.lag == 0.08
    assert cfg.controller.mpc.horizon == 3 and cfg.controller.mpc.q_weights[3] == 0.5
    assert cfg.benchmark.controllers == ("jacobian", "gru")
    assert cfg.plant_config().load_g == 50.0
    assert cfg.hash() != RunConfig().hash()
    assert parse_config("seed = 3").hash() == parse_config("seed = 3").hash()


@pytest.mark.parametrize("text", [
    "sede = 1",
    "[plant]\nload = 1",
    "[controller.mpc]\nhorizon = 0",
    "[controller.mpc]\nhorizon = 1.5",
    "[benchmark]\ncontrollers = ['pid']",
    "[benchmark]\ntask = 'c'",
    "[train]\narch = 'rnn'",
    "[benchmark]\njitter = 1",
    "seed = [",
])
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_from_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("[collect]\nduration = 10\n")
    assert load_config(p).collect.duration == 10.0
    assert load_config(None) == RunConfig()


def test_to_dict_is_plain():
    d = RunConfig().to_dict()
    assert d["controller"]["limits"]["absolute"] == 50000.0
    assert isinstance(d["train"]["grid"], list)

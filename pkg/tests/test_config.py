import json

import pytest

from interactsim.config import CONFIG_SCHEMA, SimulationConfig, config_from_mapping, load_config
from interactsim.errors import ConfigError
from interactsim.recommenders import RECOMMENDER_KINDS


def test_minimal_file_gives_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 7\n")
    cfg = load_config(path)
    assert (cfg.total_steps, cfg.agent_count, cfg.page_size, cfg.recommender) == (10, 1000, 20, "lightgcn")
    assert cfg.seed == 7


def test_empty_file_is_accepted(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("")
    assert load_config(path) == SimulationConfig()


def test_zero_steps_reports_field_path():
    with pytest.raises(ConfigError) as err:
        config_from_mapping({"total_steps": 0})
    assert "total_steps" in str(err.value)


def test_nested_field_path():
    with pytest.raises(ConfigError) as err:
        config_from_mapping({"interventions": [{"kind": "SeedBoost", "step": -1, "item_id": "x"}]})
    assert "interventions.0.step" in str(err.value)


def test_unknown_recommender_lists_valid_names():
    with pytest.raises(ConfigError) as err:
        config_from_mapping({"recommender": "deepfm"})
    message = str(err.value)
    assert "deepfm" in message
    assert all(name in message for name in RECOMMENDER_KINDS)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError):
        config_from_mapping({"totl_steps": 3})


def test_intervention_step_beyond_horizon():
    with pytest.raises(ConfigError) as err:
        config_from_mapping({"total_steps": 3, "interventions": [{"kind": "SeedBoost", "step": 5, "item_id": "x"}]})
    assert "interventions.0.step" in str(err.value)


def test_json_and_yaml_agree(tmp_path):
    body = {"total_steps": 4, "agent_count": 9, "recommender": "mf", "train": {"epochs": 5}}
    j = tmp_path / "c.json"
    j.write_text(json.dumps(body))
    y = tmp_path / "c.yml"
    y.write_text("total_steps: 4\nagent_count: 9\nrecommender: mf\ntrain:\n  epochs: 5\n")
    assert load_config(j) == load_config(y)
    assert load_config(j).train.epochs == 5


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("42\n")
    with pytest.raises(ConfigError):
        load_config(scalar)


def test_hash_is_stable_and_sensitive():
    a = SimulationConfig(seed=1)
    assert a.config_hash() == SimulationConfig(seed=1).config_hash()
    assert a.config_hash() != SimulationConfig(seed=2).config_hash()
    assert SimulationConfig.from_dict(a.to_dict()) == a


def test_persona_list_cycles():
    cfg = SimulationConfig(persona=["random", "preference-match"])
    assert [cfg.persona_for(n) for n in range(3)] == ["random", "preference-match", "random"]


def test_strategy_lookup():
    cfg = SimulationConfig(merchant_strategy_map={"m1": "NegativeConfront"}, default_merchant_strategy="PositiveEngage")
    assert cfg.strategy_for("m1").value == "NegativeConfront"
    assert cfg.strategy_for("m2").value == "PositiveEngage"


def test_schema_is_valid_json_schema():
    import jsonschema

    jsonschema.Draft202012Validator.check_schema(CONFIG_SCHEMA)

"""Config file surface: defaults, key mapping, unknown-key rejection."""

import json

import pytest

from tcve.config import (RunConfig, config_from_dict, load_config, toy_config)


class TestDefaults:
    def test_empty_object_is_full_default(self):
        assert config_from_dict({}) == RunConfig()

    def test_spec_defaults(self):
        cfg = RunConfig()
        assert cfg.spatial.channel_schedule == (32, 64)
        assert cfg.spatial.latent_channels == 12
        assert cfg.spatial.text_dim == 64
        assert cfg.temporal.levels == 2
        assert cfg.stu.balance == 0.1
        assert cfg.train.learning_rate == 3e-5
        assert cfg.train.iterations == 100
        assert cfg.train.adam_beta1 == 0.9
        assert cfg.train.adam_beta2 == 0.999
        assert cfg.train.adam_eps == 1e-8
        assert cfg.schedule.total_steps == 1000
        assert cfg.schedule.sample_steps == 50

    def test_toy_config_shape(self):
        cfg = toy_config()
        assert cfg.schedule.total_steps == 50
        assert cfg.train.iterations == 100


class TestParsing:
    def test_lambda_key_maps_to_balance(self):
        cfg = config_from_dict({"stu": {"lambda": 0.0}})
        assert cfg.stu.balance == 0.0

    def test_schedule_short_keys(self):
        cfg = config_from_dict({"schedule": {"T": 100, "S": 25}})
        assert cfg.schedule.total_steps == 100
        assert cfg.schedule.sample_steps == 25

    def test_channel_schedule_list_becomes_tuple(self):
        cfg = config_from_dict({"spatial": {"channel_schedule": [16, 24]}})
        assert cfg.spatial.channel_schedule == (16, 24)

    def test_train_ablation_subobject(self):
        cfg = config_from_dict({"train": {"ablation": {"stu": False}}})
        assert not cfg.train.ablation.stu
        assert cfg.train.ablation.temporal_unet

    def test_unknown_top_key_rejected_by_name(self):
        with pytest.raises(ValueError, match="mystery"):
            config_from_dict({"mystery": {}})

    def test_unknown_nested_key_rejected_by_name(self):
        with pytest.raises(ValueError, match="train.warmup"):
            config_from_dict({"train": {"warmup": 5}})

    def test_non_object_section_rejected(self):
        with pytest.raises(ValueError, match="object"):
            config_from_dict({"train": 5})

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError, match="learning_rate"):
            config_from_dict({"train": {"learning_rate": 0}})
        with pytest.raises(ValueError, match="balance"):
            config_from_dict({"stu": {"lambda": -0.5}})

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"schedule": {"T": 64, "S": 8}}), encoding="utf-8")
        assert load_config(path).schedule.total_steps == 64

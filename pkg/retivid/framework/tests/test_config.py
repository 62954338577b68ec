# -*- coding: utf-8 -*-
import pytest
from pytest import fixture

from retivid import framework


class TestConfig(object):
    @fixture(autouse=True)
    def reset_config(self):
        framework.config.reset()

    def test_defaults(self):
        config_sections = framework.config.to_dict().keys()
        for section_name in config_sections:
            section = getattr(framework.config, section_name)
            assert section == framework.config.get_defaults()[section_name]

    def test_defaults_specific(self):
        assert framework.config.TRAIN['lr'] == 1e-4
        assert framework.config.TRAIN['weight_decay'] == 3e-4
        assert framework.config.TRAIN['flow_scale'] == 3
        assert framework.config.METRICS['mabd_window'] == 15
        assert framework.config.RUN['bin_dir'] == './bin'
        assert len(framework.config.TRAIN['loss_weights']) == 11

    def test_custom_conf(self):
        user_dict = dict(
            TRAIN=dict(mode='underwater'),
            RUN=dict(log_dir='/dev/null'),
        )
        framework.config.update(user_dict)
        assert framework.config.TRAIN['mode'] == 'underwater'
        assert framework.config.RUN['log_dir'] == '/dev/null'
        default_bin_dir = framework.config.get_defaults()['RUN']['bin_dir']
        assert framework.config.RUN['bin_dir'] == default_bin_dir

    def test_layered_conf(self):
        assert framework.config.TRAIN['epochs'] == 5
        first = dict(TRAIN=dict(epochs=1))
        framework.config.update(first)
        assert framework.config.TRAIN['epochs'] == 1
        second = dict(
            TRAIN=dict(epochs=2, loss_weights=dict(color=0.5)),
            FLOW=dict(backend='external'),
        )
        framework.config.update(second)
        assert framework.config.TRAIN['epochs'] == 2
        assert framework.config.TRAIN['loss_weights']['color'] == 0.5
        assert framework.config.TRAIN['loss_weights']['res1'] == 1.0
        assert framework.config.FLOW['backend'] == 'external'

    def test_unknown_section(self):
        with pytest.raises(ValueError):
            framework.config.update(dict(DEPLOYMENT=dict(platform='aws')))

    def test_model_hash(self):
        standard = framework.config.model_hash('standard')
        assert standard == framework.config.model_hash('standard')
        assert standard != framework.config.model_hash('underwater')
        framework.config.update(dict(MODEL=dict(rd_channels=32)))
        assert standard != framework.config.model_hash('standard')

    def test_model_hash_explicit_section(self):
        model = dict(framework.config.MODEL)
        assert framework.config.model_hash('standard', model) == (
            framework.config.model_hash('standard')
        )


class TestMergeDict:
    def test_merge_dict(self):
        objA = dict(
            a_dict=dict(
                another_list=[],
                another_string="greetings",
            ),
            a_list=[0, 1, 2],
        )
        objB = dict(
            a_dict=dict(
                another_list=[3],
            ),
            a_string="hello",
        )
        framework.merge_dict(objA, objB)
        assert objA == dict(
            a_dict=dict(
                another_list=[3],
                another_string="greetings",
            ),
            a_list=[0, 1, 2],
            a_string="hello",
        )

import logging

import pytest

from retivid.framework import config
from tests import helpers

log = logging.getLogger(__name__)


class RetividLogFormatter(logging.Formatter):

    def __init__(self):
        fmt = (
            "%(asctime)s - %(levelname)s - %(name)s.%(funcName)s.%(lineno)d "
            "- %(message)s"
        )
        super(RetividLogFormatter, self).__init__(fmt)


def pytest_logger_config(logger_config):
    logger_config.add_loggers([''], stdout_level='info')
    logger_config.set_log_option_default('')
    logger_config.split_by_outcome()
    logger_config.set_formatter_class(RetividLogFormatter)


@pytest.fixture(scope='function')
def reset_config(tmp_path):
    """
    Default configuration, logs of CLI runs go to the test directory
    """
    config.reset()
    config.RUN['log_dir'] = str(tmp_path / 'logs')
    yield
    config.reset()


@pytest.fixture(scope='function')
def clip_factory():
    """
    Synthetic clip factory. Calling this fixture builds a low light clip,
    or a tinted underwater clip with tinted=True.
    """
    def factory(tinted=False, **kwargs):
        """
        Args:
            tinted (bool): build a blue tinted clip instead of a dark one

        Keyword Args:
            passed to helpers.dark_noisy_clip / helpers.tinted_clip

        Returns:
            Clip: the clip

        """
        if tinted:
            return helpers.tinted_clip(**kwargs)
        return helpers.dark_noisy_clip(**kwargs)

    return factory


@pytest.fixture(scope='function')
def clip_dir_factory(tmp_path, clip_factory):
    """
    Clip directory factory. Calling this fixture writes a synthetic clip as
    PNG frames and returns the directory.
    """
    counter = []

    def factory(clip=None, bit_depth=16, **kwargs):
        clip = clip or clip_factory(**kwargs)
        counter.append(clip)
        path = tmp_path / f"clip{len(counter)}"
        log.info(f"Writing {len(clip)} frames of {clip.source_id} to {path}")
        return helpers.write_clip_dir(clip, path, bit_depth)

    return factory

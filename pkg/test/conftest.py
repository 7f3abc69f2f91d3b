from typing import Tuple

import pytest

from anonybench import DatasetSplit, RunConfig, make_splits

TINY = {
    'frames': 4, 'height': 8, 'width': 8, 'num_actions': 2, 'num_attributes': 2,
    'n_action_train': 8, 'n_action_eval': 4, 'n_privacy_train': 8, 'n_privacy_eval': 4,
    'skip': 2, 'anon_width1': 4, 'anon_width2': 4, 'enc_width1': 4, 'enc_width2': 4,
    'hidden': 8, 'projection_dim': 4,
    'pretrain_epochs': 1, 'utility_pretrain_epochs': 1, 'budget_pretrain_epochs': 1,
    'anon_epochs': 2, 'action_epochs': 1, 'privacy_epochs': 1,
    'batch_pretrain': 4, 'batch_action': 4, 'batch_privacy': 4, 'batch_probe': 4,
    'optimizer': 'adam', 'lr_anonymizer': 1e-2, 'lr_utility': 1e-2, 'lr_budget': 1e-2, 'lr_probe': 1e-2,
    'debug_checks': True,
}


def tiny(**changes) -> RunConfig:
    return RunConfig().replace(**{**TINY, **changes}).validate()


@pytest.fixture
def tiny_config() -> RunConfig:
    return tiny()


@pytest.fixture
def tiny_splits(tiny_config: RunConfig) -> Tuple[DatasetSplit, DatasetSplit]:
    return make_splits(tiny_config.data, tiny_config.train.seed)


@pytest.fixture
def make_config():
    """ Tiny configuration with the given keys changed. """
    return tiny

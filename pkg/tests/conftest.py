import json
import math

import numpy as np
import pandas as pd
import pytest

from seqnav.config import run_config_from_dict
from seqnav.env import EnvConfig, RandomizationConfig, write_trajectory
from seqnav.policy import Trainer


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_env_cfg():
    '''Eight training envs with a short episode.'''
    return EnvConfig(num_envs=8, episode_length=2.0)


@pytest.fixture
def still_env_cfg():
    '''Evaluation envs that start at rest at the origin facing +x.'''
    return EnvConfig(num_envs=4, episode_length=2.0, mode='eval', randomization=RandomizationConfig.none())


@pytest.fixture
def tiny_run_cfg():
    '''A run that trains in well under a second.'''
    return run_config_from_dict({
        'seed': 7,
        'env': {'num_envs': 4, 'episode_length': 1.0, 'curriculum': {'update_period': 8}},
        'ppo': {'iterations': 3, 'steps_per_env': 8, 'epochs': 2, 'minibatches': 2,
                'hidden_sizes': [16, 16], 'checkpoint_every': 1},
    })


@pytest.fixture
def untrained_ckpt(tmp_path, tiny_run_cfg):
    '''Checkpoint of a freshly initialised policy.'''
    trainer = Trainer(tiny_run_cfg, tmp_path / 'run')
    return trainer.checkpoint().save(tmp_path / 'untrained.ckpt')


@pytest.fixture
def traj_df():
    rows = [
        (0.00, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0.0, '-'),
        (0.02, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0, 0.3, '-'),
        (0.04, 0.3, 0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 1, 0.6, 'switch_direct'),
        (0.06, 0.5, 0.1, 0.2, 2.0, 0.0, 1.0, 2.0, 1, 0.6, '-'),
        (0.08, 0.6, 0.2, 0.4, 1.0, 0.0, 1.0, 1.0, 2, 1.0, 'complete'),
    ]
    return pd.DataFrame(rows, columns=['t', 'x', 'y', 'theta', 'v_long', 'v_lat', 'omega',
                                       'speed', 'k', 'reward', 'event'])


@pytest.fixture
def traj_csv(tmp_path, traj_df):
    goals = np.array([[0.3, 0.0, 0.0], [0.6, 0.2, math.pi / 4]])
    return write_trajectory(tmp_path / 'traj.csv', traj_df, goals)


@pytest.fixture
def report_dir(tmp_path):
    '''Folder with a two-cell sweep and a short metrics stream.'''
    cells = [
        {'policy': 'smooth', 'sequence': 'zz120', 'preset': 'loose', 'n_episodes': 10,
         'fr_pct': 10.0, 'sr_pct': 80.0, 'timeout_pct': 10.0,
         'time_mean_s': 4.2, 'time_std_s': 0.3, 'time_median_s': 4.1},
        {'policy': 'baseline', 'sequence': 'zz120', 'preset': 'loose', 'n_episodes': 10,
         'fr_pct': 70.0, 'sr_pct': 20.0, 'timeout_pct': 10.0,
         'time_mean_s': 5.0, 'time_std_s': 0.5, 'time_median_s': 5.1},
    ]
    (tmp_path / 'sweep.json').write_text(json.dumps(cells))
    (tmp_path / 'notes.json').write_text(json.dumps({'unrelated': True}))
    with (tmp_path / 'metrics.jsonl').open('w') as fh:
        for i in range(1, 4):
            fh.write(json.dumps({'iteration': i, 'c': 0.05 * i, 'success_rate': 0.5,
                                 'mean_reward': 0.1 * i, 'fall_rate': 0.0}) + '\n')
    return tmp_path

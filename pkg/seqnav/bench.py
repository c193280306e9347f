'''
Fixed-sequence benchmarks and threshold sweeps.

Every benchmark episode is classified exactly once: *fallen* (traction
violation), *success* (all goals reached within the time limit) or *timeout*.
Completion times are only aggregated over successes.
'''

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence, Union, runtime_checkable

import numpy as np
import pandas as pd
import torch

from .checkpoint import Checkpoint
from .config import run_config_from_dict
from .curriculum import place_goal
from .env import BASE_OBS_DIM, EnvConfig, RandomizationConfig, TerminationCause, VecEnv
from .errors import CheckpointError, DimensionMismatchError, InvalidArgumentError
from .policy import DTYPE, ActorCritic, RunningMeanStd, action_scale
from .sim import DynamicsConfig
from .task import THRESHOLD_PRESETS, GoalSequence, PlanarPose

logger = logging.getLogger(__name__)

OUTCOMES = ('fallen', 'success', 'timeout')


# ---------------------------------------------------------------------------
# Fixed sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedSequenceSpec:
    '''
    A prescribed turning pattern of three goals.

    :param name:            sequence identifier
    :param pattern:         signed turns of the two turning goals (rad)
    :param length:          travel length per goal (m)
    :param pre_step:        advance along the reference heading before turning (m)
    :param turn_first_goal: when true the first goal turns as well and the
                            pattern repeats (``a, b, a``); otherwise the first
                            goal is straight ahead
    '''
    name: str
    pattern: tuple[float, float]
    length: float = 3.0
    pre_step: float = 0.5
    turn_first_goal: bool = False

    @property
    def turns(self) -> tuple[float, float, float]:
        a, b = self.pattern
        return (a, b, a) if self.turn_first_goal else (0.0, a, b)

    @property
    def n_goals(self) -> int:
        return 3


FIXED_SEQUENCES: dict[str, FixedSequenceSpec] = {
    s.name: s for s in (
        FixedSequenceSpec('cw60', (-math.pi / 3, -math.pi / 3)),
        FixedSequenceSpec('ccw90', (math.pi / 2, math.pi / 2)),
        FixedSequenceSpec('zz120', (-2 * math.pi / 3, 2 * math.pi / 3)),
        FixedSequenceSpec('zz150', (-5 * math.pi / 6, 5 * math.pi / 6)),
    )
}


def build_fixed_sequence(spec: FixedSequenceSpec, start: PlanarPose = PlanarPose()) -> GoalSequence:
    '''Chain the pattern's goals from ``start``, each relative to the previous goal.'''
    goals = []
    ref = start
    for dtheta in spec.turns:
        goal = place_goal(ref, dtheta, spec.length, spec.pre_step)
        goals.append(goal)
        ref = PlanarPose(goal.x, goal.y, goal.theta)
    return GoalSequence(tuple(goals))


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

@runtime_checkable
class Policy(Protocol):
    '''Maps a ``(B, obs_dim)`` observation batch to ``(B, 3)`` accelerations.'''
    obs_dim: int

    def act(self, obs: np.ndarray) -> np.ndarray: ...


@dataclass
class ZeroPolicy:
    '''Never accelerates.'''
    obs_dim: int = BASE_OBS_DIM + 6

    def act(self, obs: np.ndarray) -> np.ndarray:
        return np.zeros((obs.shape[0], 3))


@dataclass
class SpinDashPolicy:
    '''Full forward and yaw acceleration: leaves the friction circle within a second.'''
    obs_dim: int = BASE_OBS_DIM + 6
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)

    def act(self, obs: np.ndarray) -> np.ndarray:
        out = np.zeros((obs.shape[0], 3))
        out[:, 0] = self.dynamics.a_max
        out[:, 2] = self.dynamics.alpha_max
        return out


@dataclass
class PursuitTurner:
    '''
    Scripted pursuit of the current goal command without lookahead.

    Speed follows a stopping profile toward the current goal. Turns never brake
    the robot: while the goal bearing is large it only refrains from speeding
    up, so a goal switch taken at speed carries that speed into the next turn.
    Inside ``settle_radius`` it holds its heading and brakes onto the goal.
    '''
    obs_dim: int = BASE_OBS_DIM + 6
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    cruise_speed: float = 3.5
    heading_gain: float = 6.0
    speed_gain: float = 20.0
    settle_radius: float = 0.15

    def act(self, obs: np.ndarray) -> np.ndarray:
        dyn = self.dynamics
        v_long, v_lat, omega = obs[:, 0], obs[:, 1], obs[:, 2]
        dx, dy = obs[:, BASE_OBS_DIM], obs[:, BASE_OBS_DIM + 1]
        d = np.hypot(dx, dy)
        bearing = np.arctan2(dy, dx)

        v_goal = np.minimum(self.cruise_speed, np.sqrt(2.0 * dyn.a_max * d))
        v_turn = self.cruise_speed * np.maximum(0.0, np.cos(bearing)) ** 4
        settling = d < self.settle_radius
        v_des = np.where(settling, v_goal * np.maximum(0.0, np.cos(bearing)),
                         np.minimum(v_goal, np.maximum(v_turn, v_long)))
        omega_des = np.where(settling, 0.0,
                             np.clip(self.heading_gain * bearing, -dyn.omega_max, dyn.omega_max))

        out = np.empty((obs.shape[0], 3))
        out[:, 0] = self.speed_gain * (v_des - v_long)
        out[:, 1] = -self.speed_gain * v_lat
        out[:, 2] = (omega_des - omega) / dyn.dt
        return out


class CheckpointPolicy:
    '''Deterministic (mean) action of a trained checkpoint with frozen observation statistics.'''

    def __init__(self, ckpt: Union[Checkpoint, str, Path], name: Optional[str] = None) -> None:
        if not isinstance(ckpt, Checkpoint):
            path = Path(ckpt)
            name = name or path.stem
            ckpt = Checkpoint.load(path)
        self.name = name or 'policy'
        self.run_cfg = run_config_from_dict(ckpt.config)
        env_cfg = self.run_cfg.env
        self.obs_dim = env_cfg.obs_dim
        self.n_lookahead = env_cfg.n_lookahead
        self.scale = action_scale(env_cfg.dynamics)
        self.model = ActorCritic(self.obs_dim, self.run_cfg.ppo.hidden_sizes)
        try:
            self.model.load_state_dict({n[len('params/'):]: torch.as_tensor(v, dtype=DTYPE)
                                        for n, v in ckpt.arrays.items() if n.startswith('params/')})
            self.obs_norm = RunningMeanStd(self.obs_dim)
            self.obs_norm.mean = ckpt.arrays['obs_norm/mean']
            self.obs_norm.var = ckpt.arrays['obs_norm/var']
            self.obs_norm.count = float(ckpt.arrays['obs_norm/count'][0])
        except (KeyError, RuntimeError) as e:
            raise CheckpointError(f'checkpoint does not hold a compatible policy: {e}') from e
        self.model.eval()

    def act(self, obs: np.ndarray) -> np.ndarray:
        if obs.shape[-1] != self.obs_dim:
            raise DimensionMismatchError(f'policy expects {self.obs_dim} observation channels, got {obs.shape[-1]}')
        with torch.no_grad():
            mean = self.model(torch.as_tensor(self.obs_norm.normalize(obs), dtype=DTYPE))[0]
        return mean.numpy() * self.scale


def _policy_name(policy: Policy) -> str:
    return getattr(policy, 'name', None) or type(policy).__name__


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchReport:
    '''Outcome of one (policy, sequence, preset) cell.'''
    policy: str
    sequence: str
    preset: str
    n_episodes: int
    fr_pct: float
    sr_pct: float
    timeout_pct: float
    time_mean_s: Optional[float]
    time_std_s: Optional[float]
    time_median_s: Optional[float]
    records: pd.DataFrame = field(repr=False, default_factory=pd.DataFrame)

    def to_dict(self) -> dict:
        return {
            'policy': self.policy,
            'sequence': self.sequence,
            'preset': self.preset,
            'n_episodes': self.n_episodes,
            'fr_pct': self.fr_pct,
            'sr_pct': self.sr_pct,
            'timeout_pct': self.timeout_pct,
            'time_mean_s': self.time_mean_s,
            'time_std_s': self.time_std_s,
            'time_median_s': self.time_median_s,
        }

    @classmethod
    def from_records(cls, policy: str, sequence: str, preset: str, records: pd.DataFrame) -> BenchReport:
        n = len(records)
        counts = records['outcome'].value_counts()
        n_fallen, n_success = int(counts.get('fallen', 0)), int(counts.get('success', 0))
        fr_pct = 100.0 * n_fallen / n
        # remainders keep the three rates summing to exactly 100
        sr_pct = 100.0 * n_success / n if n_fallen + n_success < n else 100.0 - fr_pct
        timeout_pct = 100.0 - (fr_pct + sr_pct)
        times = records.loc[records['outcome'] == 'success', 'time_s']
        assert len(times) == n_success
        has = len(times) > 0
        return cls(policy=policy, sequence=sequence, preset=preset, n_episodes=n,
                   fr_pct=fr_pct, sr_pct=sr_pct, timeout_pct=timeout_pct,
                   time_mean_s=float(times.mean()) if has else None,
                   time_std_s=float(times.std(ddof=0)) if has else None,
                   time_median_s=float(times.median()) if has else None,
                   records=records)


def eval_env_config(preset: str, n_lookahead: int, num_envs: int = 512, time_limit: float = 10.0,
                    base: Optional[EnvConfig] = None, randomize: bool = True) -> EnvConfig:
    '''
    Evaluation setup on three fixed goals. With ``randomize`` every episode
    gets its own friction, start speed, heading offset and sensor noise
    (:meth:`RandomizationConfig.evaluation`); otherwise the nominal robot
    starts at rest with clean observations.
    '''
    if preset not in THRESHOLD_PRESETS:
        raise InvalidArgumentError(f'unknown threshold preset {preset!r}; choose from {sorted(THRESHOLD_PRESETS)}')
    base = base or EnvConfig()
    mu = base.dynamics.mu
    randomization = RandomizationConfig.evaluation(mu) if randomize else RandomizationConfig.none(mu)
    return replace(base, num_envs=num_envs, episode_length=time_limit, n_goals=3, n_lookahead=n_lookahead,
                   mode='eval', reward_mode='sequential', thresholds=THRESHOLD_PRESETS[preset].thresholds,
                   randomization=randomization)


def run_benchmark(policy: Policy, spec: Union[FixedSequenceSpec, str], preset: str, num_envs: int = 512,
                  time_limit: float = 10.0, seed: int = 0, env_cfg: Optional[EnvConfig] = None,
                  record_traj: Optional[Union[str, Path]] = None, record_count: int = 4,
                  policy_name: Optional[str] = None, randomize: bool = True) -> BenchReport:
    '''
    Run ``num_envs`` evaluation episodes of ``spec`` under the threshold preset.

    :param seed:        root of the per-episode start conditions and the sensor noise
    :param env_cfg:     base configuration (dynamics, reward settings); defaults to the
                        policy's own training configuration when it carries one
    :param record_traj: directory receiving trajectory CSVs of the first ``record_count`` envs
    :param randomize:   per-episode start and sensor spread, see :func:`eval_env_config`
    :raises DimensionMismatchError: when the policy's observation size has no lookahead match
    '''
    if isinstance(spec, str):
        if spec not in FIXED_SEQUENCES:
            raise InvalidArgumentError(f'unknown sequence {spec!r}; choose from {sorted(FIXED_SEQUENCES)}')
        spec = FIXED_SEQUENCES[spec]
    extra = policy.obs_dim - BASE_OBS_DIM
    if extra < 3 or extra % 3:
        raise DimensionMismatchError(f'policy observation size {policy.obs_dim} does not match any lookahead window')
    name = policy_name or _policy_name(policy)
    if env_cfg is None and getattr(policy, 'run_cfg', None) is not None:
        env_cfg = policy.run_cfg.env

    cfg = eval_env_config(preset, extra // 3, num_envs, time_limit, env_cfg, randomize)
    # goals stay put in the world frame; only the robot start is jittered
    env = VecEnv(cfg, seed=seed, sequence_builder=lambda _start: build_fixed_sequence(spec))
    if record_traj is not None:
        for i in range(min(record_count, num_envs)):
            env.record(i, Path(record_traj) / f'{name}_{spec.name}_{preset}_env{i:03d}.csv')

    obs = env.reset_all()
    cause = np.zeros(num_envs, dtype=int)
    end_time = np.zeros(num_envs)
    for _ in range(cfg.max_steps):
        result = env.step(policy.act(obs))
        cause[result.terminated] = result.cause[result.terminated]
        end_time[result.terminated] = env.clock[result.terminated]
        obs = result.obs
        if env.done.all():
            break
    env.close_recorders()

    outcome = np.select([cause == TerminationCause.FALLEN, cause == TerminationCause.SEQUENCE_COMPLETE],
                        ['fallen', 'success'], 'timeout')
    records = pd.DataFrame({'env': np.arange(num_envs), 'outcome': outcome,
                            'time_s': end_time, 'goals_reached': env.k.copy()})
    report = BenchReport.from_records(name, spec.name, preset, records)
    logger.info('%s %s %s: FR %.1f%% SR %.1f%% timeout %.1f%%', name, spec.name, preset,
                report.fr_pct, report.sr_pct, report.timeout_pct)
    return report


def sweep_thresholds(policies: Mapping[str, Policy], presets: Sequence[str],
                     specs: Sequence[Union[FixedSequenceSpec, str]], **kwargs) -> list[BenchReport]:
    '''Evaluate the full ``policies x presets x specs`` product.'''
    reports = []
    for name, policy in policies.items():
        for preset in presets:
            for spec in specs:
                reports.append(run_benchmark(policy, spec, preset, policy_name=name, **kwargs))
    return reports


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def summary_frame(reports: Iterable[BenchReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in reports])


def _time_cell(mean: Optional[float], std: Optional[float]) -> str:
    if mean is None:
        return '-'
    return f'{mean:.2f}±{std:.2f}'


def format_table(reports: Sequence[BenchReport]) -> str:
    '''
    Text table with one row per (threshold preset, policy) and FR / SR / time
    columns per sequence.
    '''
    if not reports:
        return 'No results.'
    rows = []
    for r in reports:
        preset = THRESHOLD_PRESETS.get(r.preset)
        rows.append({
            'thresholds': preset.label() if preset else r.preset,
            'policy': r.policy,
            'sequence': r.sequence,
            'FR%': f'{r.fr_pct:.1f}',
            'SR%': f'{r.sr_pct:.1f}',
            'time (s)': _time_cell(r.time_mean_s, r.time_std_s),
        })
    df = pd.DataFrame(rows)
    order = list(dict.fromkeys(df['sequence']))
    table = df.pivot_table(index=['thresholds', 'policy'], columns='sequence',
                           values=['FR%', 'SR%', 'time (s)'], aggfunc='first', sort=False)
    table = table.swaplevel(axis=1)
    table = table.reindex(columns=pd.MultiIndex.from_product([order, ['FR%', 'SR%', 'time (s)']]))
    return table.to_string()


def write_sweep(reports: Sequence[BenchReport], out_dir: Union[str, Path]) -> dict[str, Path]:
    '''Write ``sweep.json``, ``sweep.txt`` and ``sweep.xlsx`` into ``out_dir``.'''
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {'json': out_dir / 'sweep.json', 'txt': out_dir / 'sweep.txt', 'xlsx': out_dir / 'sweep.xlsx'}
    paths['json'].write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    paths['txt'].write_text(format_table(reports) + '\n')
    with pd.ExcelWriter(paths['xlsx'], engine='openpyxl') as w:
        summary_frame(reports).to_excel(w, sheet_name='Summary', index=False)
        records = [r.records.assign(policy=r.policy, sequence=r.sequence, preset=r.preset)
                   for r in reports if not r.records.empty]
        if records:
            pd.concat(records, ignore_index=True).to_excel(w, sheet_name='Episodes', index=False)
    logger.info('wrote sweep of %d cells to %s', len(reports), out_dir)
    return paths

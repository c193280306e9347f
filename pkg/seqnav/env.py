'''
Batched sequential-navigation environments.

:class:`VecEnv` steps ``num_envs`` planar robots at once. Each step integrates
the dynamics, evaluates the goal switch once, computes the task reward against
the (possibly new) current goal plus auxiliary regularisers, resolves
termination and assembles the next observation::

    [v_long, v_lat, omega, prev_action (3), remaining_time, n x (dx, dy, dtheta)]

Training environments reset themselves when they terminate; evaluation
environments freeze until the next :meth:`VecEnv.reset_all`.
'''

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd

from .curriculum import CurriculumConfig, CurriculumState, EpisodeGoalSpec, interp_ranges, record_outcome, \
    record_sequence
from .errors import DimensionMismatchError, InvalidArgumentError
from .rng import batch_stream, generator_state, restore_generator
from .sim import ActionCmd, DynamicsConfig, PlanarState, check_fall, clamp_command, step_dynamics
from .task import SWITCH_DIRECT, SWITCH_NONE, SWITCH_STOP, BaselineRewardConfig, Goal, GoalSequence, \
    PlanarPose, ReachThresholds, SequentialRewardConfig, advance_counters, baseline_track_reward, \
    current_goal, kernel, lookahead_batch, planar_errors, pose_error, reached_direct, reached_stop, \
    sequential_reward_from_error, wrap

logger = logging.getLogger(__name__)

BASE_OBS_DIM = 7

TRAJ_COLUMNS = ('t', 'x', 'y', 'theta', 'v_long', 'v_lat', 'omega', 'speed', 'k', 'reward', 'event')


class TerminationCause(enum.IntEnum):
    NONE = 0
    FALLEN = 1
    TIMEOUT = 2
    SEQUENCE_COMPLETE = 3


_CAUSE_EVENTS = {
    TerminationCause.FALLEN: 'fall',
    TerminationCause.TIMEOUT: 'timeout',
    TerminationCause.SEQUENCE_COMPLETE: 'complete',
}
_SWITCH_EVENTS = {SWITCH_DIRECT: 'switch_direct', SWITCH_STOP: 'switch_stop'}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _check_range(name: str, pair: tuple[float, float], lo: float = -math.inf) -> None:
    if len(pair) != 2 or not lo <= pair[0] <= pair[1]:
        raise InvalidArgumentError(f'{name} must be an ordered pair >= {lo}, got {pair!r}')


@dataclass(frozen=True)
class ObsNoiseConfig:
    '''Per-channel observation noise standard deviations.'''
    lin_vel: float = 0.05
    ang_vel: float = 0.1
    command_pos: float = 0.02
    command_heading: float = 0.02

    def __post_init__(self) -> None:
        if min(self.lin_vel, self.ang_vel, self.command_pos, self.command_heading) < 0:
            raise InvalidArgumentError('observation noise must be non-negative')

    @property
    def enabled(self) -> bool:
        return any((self.lin_vel, self.ang_vel, self.command_pos, self.command_heading))


@dataclass(frozen=True)
class RandomizationConfig:
    '''
    :param mu_range:            friction coefficient range
    :param init_speed_range:    initial forward speed (m/s)
    :param init_heading_jitter: initial heading is drawn from ``[-jitter, jitter]``
    :param a_max_scale_range:   multiplier on the acceleration limit
    :param obs_noise:           observation noise
    '''
    mu_range: tuple[float, float] = (0.4, 1.0)
    init_speed_range: tuple[float, float] = (0.0, 1.0)
    init_heading_jitter: float = math.pi
    a_max_scale_range: tuple[float, float] = (0.8, 1.2)
    obs_noise: ObsNoiseConfig = field(default_factory=ObsNoiseConfig)

    def __post_init__(self) -> None:
        _check_range('mu_range', self.mu_range, 1e-6)
        _check_range('init_speed_range', self.init_speed_range, 0.0)
        _check_range('a_max_scale_range', self.a_max_scale_range, 1e-6)
        if not 0 <= self.init_heading_jitter <= math.pi:
            raise InvalidArgumentError('init_heading_jitter must lie in [0, pi]')

    @classmethod
    def none(cls, mu: float = DynamicsConfig.mu) -> RandomizationConfig:
        '''Degenerate ranges: nominal friction, start at rest facing +x, no noise.'''
        return cls(mu_range=(mu, mu), init_speed_range=(0.0, 0.0), init_heading_jitter=0.0,
                   a_max_scale_range=(1.0, 1.0), obs_noise=ObsNoiseConfig(0.0, 0.0, 0.0, 0.0))

    @classmethod
    def evaluation(cls, mu: float = DynamicsConfig.mu) -> RandomizationConfig:
        '''
        Benchmark spread: friction within 0.03 of ``mu``, a nearly resting start
        facing +x and light sensor noise. Acceleration limits stay nominal.
        '''
        return cls(mu_range=(max(1e-6, mu - 0.03), mu + 0.03), init_speed_range=(0.0, 0.2),
                   init_heading_jitter=0.05, a_max_scale_range=(1.0, 1.0),
                   obs_noise=ObsNoiseConfig(0.02, 0.04, 0.01, 0.01))


@dataclass(frozen=True)
class AuxRewardConfig:
    '''
    Weights of the auxiliary reward terms. Each term is bounded in magnitude by
    its weight. The ``tracking_*`` to ``stall_speed`` entries only apply to the
    baseline reward mode.
    '''
    action_rate: float = 0.05
    yaw_accel: float = 0.02
    fall_penalty: float = 10.0
    tracking_position: float = 1.0
    tracking_heading: float = 0.5
    forward: float = 0.2
    stand: float = 0.2
    stall: float = 0.2
    far_distance: float = 1.0
    stall_speed: float = 0.3
    stand_radius: float = 0.25
    stand_speed: float = 0.2

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise InvalidArgumentError(f'aux.{name} must be non-negative, got {value!r}')
        if self.stand_speed <= 0:
            raise InvalidArgumentError('aux.stand_speed must be positive')


REWARD_MODES = ('sequential', 'baseline')
ENV_MODES = ('train', 'eval')


@dataclass(frozen=True)
class EnvConfig:
    '''
    :param num_envs:        batch size
    :param episode_length:  seconds per episode (training) or time limit (evaluation)
    :param n_goals:         goals per episode sequence
    :param n_lookahead:     goal commands in the observation
    :param reward_mode:     ``sequential`` or ``baseline``
    :param mode:            ``train`` auto-resets, ``eval`` freezes finished environments
    :param regenerate_on_complete:  in training, a finished sequence is replaced by a
                                    fresh one from the current pose instead of ending
                                    the episode
    '''
    num_envs: int = 256
    episode_length: float = 8.0
    n_goals: int = 2
    n_lookahead: int = 2
    reward_mode: str = 'sequential'
    mode: str = 'train'
    regenerate_on_complete: bool = True
    thresholds: ReachThresholds = field(default_factory=ReachThresholds)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    sequential: SequentialRewardConfig = field(default_factory=SequentialRewardConfig)
    baseline: BaselineRewardConfig = field(default_factory=BaselineRewardConfig)
    aux: AuxRewardConfig = field(default_factory=AuxRewardConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)

    def __post_init__(self) -> None:
        if self.num_envs < 1 or self.n_goals < 1 or self.n_lookahead < 1:
            raise InvalidArgumentError('num_envs, n_goals and n_lookahead must be >= 1')
        if self.reward_mode not in REWARD_MODES:
            raise InvalidArgumentError(f'reward_mode must be one of {REWARD_MODES}, got {self.reward_mode!r}')
        if self.mode not in ENV_MODES:
            raise InvalidArgumentError(f'mode must be one of {ENV_MODES}, got {self.mode!r}')
        if self.max_steps < 1:
            raise InvalidArgumentError('episode_length must cover at least one control step')
        if self.reward_mode == 'baseline':
            if self.n_goals != 1:
                raise InvalidArgumentError('the baseline reward trains single-goal episodes (n_goals = 1)')
            if not math.isclose(self.baseline.T, self.episode_length):
                raise InvalidArgumentError('baseline.T must equal episode_length')

    @property
    def obs_dim(self) -> int:
        return BASE_OBS_DIM + 3 * self.n_lookahead

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / self.dynamics.dt))

    @property
    def switching(self) -> bool:
        '''Goal switching is evaluated everywhere except baseline training.'''
        return self.mode == 'eval' or self.reward_mode == 'sequential'


# ---------------------------------------------------------------------------
# Observation
# ---------------------------------------------------------------------------

def build_observation(state: PlanarState, k: np.ndarray, goals: np.ndarray, prev_action: np.ndarray,
                      steps: np.ndarray, cfg: EnvConfig,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    '''
    Assemble the ``(B, 7 + 3n)`` observation batch.

    :param state:       batched robot state
    :param k:           goal counters, shape ``(B,)``
    :param goals:       goal sequences, shape ``(B, N, 3)``
    :param prev_action: last clamped command, shape ``(B, 3)``
    :param steps:       elapsed control steps, shape ``(B,)``
    :param rng:         when given, observation noise is added from it
    '''
    dyn = cfg.dynamics
    n = goals.shape[0]
    cmds = lookahead_batch(k, goals, state.pose, cfg.n_lookahead)
    remaining = np.clip(1.0 - np.asarray(steps, dtype=float) / cfg.max_steps, 0.0, 1.0)
    obs = np.concatenate([
        np.stack([np.broadcast_to(state.v_long, (n,)),
                  np.broadcast_to(state.v_lat, (n,)),
                  np.broadcast_to(state.omega, (n,))], axis=1),
        np.asarray(prev_action, dtype=float) / np.array([dyn.a_max, dyn.a_max, dyn.alpha_max]),
        remaining[:, None],
        cmds.reshape(n, -1),
    ], axis=1)
    if obs.shape[1] != cfg.obs_dim:
        raise DimensionMismatchError(f'observation has {obs.shape[1]} channels, expected {cfg.obs_dim}')

    noise = cfg.randomization.obs_noise
    if rng is not None and noise.enabled:
        std = np.zeros(cfg.obs_dim)
        std[0:2] = noise.lin_vel
        std[2] = noise.ang_vel
        std[BASE_OBS_DIM::3] = noise.command_pos
        std[BASE_OBS_DIM + 1::3] = noise.command_pos
        std[BASE_OBS_DIM + 2::3] = noise.command_heading
        obs = obs + std * rng.standard_normal(obs.shape)
        obs[:, BASE_OBS_DIM + 2::3] = wrap(obs[:, BASE_OBS_DIM + 2::3])
    return obs


# ---------------------------------------------------------------------------
# Trajectory log
# ---------------------------------------------------------------------------

def write_trajectory(path: str | Path, rows: pd.DataFrame, goals: np.ndarray) -> Path:
    '''
    Write a trajectory CSV: one ``# goal,x,y,theta`` comment line per goal, then
    the header and the samples.
    '''
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as fh:
        for gx, gy, gth in np.asarray(goals, dtype=float).reshape(-1, 3):
            fh.write(f'# goal,{float(gx)!r},{float(gy)!r},{float(gth)!r}\n')
        rows.loc[:, list(TRAJ_COLUMNS)].to_csv(fh, index=False)
    return path


class TrajectoryRecorder:
    '''Collects the first episode of one environment and writes it on :meth:`close`.'''

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.started = False
        self.closed = False
        self._rows: list[tuple] = []
        self._goals: list[np.ndarray] = []

    def add_goals(self, goals: np.ndarray) -> None:
        self._goals.append(np.asarray(goals, dtype=float).copy())

    def add(self, t: float, x: float, y: float, theta: float, v_long: float, v_lat: float,
            omega: float, k: int, reward: float, event: str) -> None:
        self.started = True
        self._rows.append((float(t), float(x), float(y), float(theta), float(v_long), float(v_lat),
                           float(omega), math.hypot(v_long, v_lat), int(k), float(reward), event))

    def close(self) -> Optional[Path]:
        if self.closed:
            return None
        self.closed = True
        goals = np.concatenate(self._goals) if self._goals else np.zeros((0, 3))
        out = write_trajectory(self.path, pd.DataFrame(self._rows, columns=TRAJ_COLUMNS), goals)
        logger.info('wrote trajectory %s (%d samples)', out, len(self._rows))
        return out


# ---------------------------------------------------------------------------
# Batched environment
# ---------------------------------------------------------------------------

@dataclass
class StepResult:
    '''
    Per-environment step outcome. ``terminated`` is true exactly where
    ``cause != NONE``.
    '''
    obs: np.ndarray
    reward: np.ndarray
    task_reward: np.ndarray
    terminated: np.ndarray
    cause: np.ndarray
    k: np.ndarray
    switch: np.ndarray
    speed: np.ndarray
    regenerated: np.ndarray
    live: np.ndarray

    @property
    def timeout(self) -> np.ndarray:
        return self.cause == TerminationCause.TIMEOUT

    @property
    def fallen(self) -> np.ndarray:
        return self.cause == TerminationCause.FALLEN


_STATE_ARRAYS = ('x', 'y', 'theta', 'v_long', 'v_lat', 'omega', 'k', 'steps', 'episode',
                 'mu', 'a_max', 'prev_action', 'goals', 'done')

SequenceBuilder = Callable[[PlanarPose], GoalSequence]


class VecEnv:
    '''
    :param cfg:                 environment configuration
    :param seed:                root seed of every random stream
    :param curriculum:          shared curriculum; training creates one from
                                ``cfg.curriculum`` when omitted
    :param sequence_builder:    builds the goal sequence from the start pose
                                instead of sampling it (fixed benchmarks)
    '''

    def __init__(self, cfg: EnvConfig, seed: int = 0, curriculum: Optional[CurriculumState] = None,
                 sequence_builder: Optional[SequenceBuilder] = None) -> None:
        self.cfg = cfg
        self.seed = int(seed)
        self.sequence_builder = sequence_builder
        self.goal_spec = EpisodeGoalSpec(cfg.curriculum.pre_step, cfg.n_goals, self.seed)
        if curriculum is None and cfg.mode == 'train' and sequence_builder is None:
            curriculum = CurriculumState.from_config(cfg.curriculum)
        self.curriculum = curriculum
        self.training = cfg.mode == 'train'

        b = cfg.num_envs
        self.x = np.zeros(b)
        self.y = np.zeros(b)
        self.theta = np.zeros(b)
        self.v_long = np.zeros(b)
        self.v_lat = np.zeros(b)
        self.omega = np.zeros(b)
        self.k = np.zeros(b, dtype=np.int64)
        self.steps = np.zeros(b, dtype=np.int64)
        self.episode = np.full(b, -1, dtype=np.int64)
        self.mu = np.full(b, cfg.dynamics.mu)
        self.a_max = np.full(b, cfg.dynamics.a_max)
        self.prev_action = np.zeros((b, 3))
        self.goals = np.zeros((b, cfg.n_goals, 3))
        self.done = np.zeros(b, dtype=bool)

        self._rngs: list[Optional[np.random.Generator]] = [None] * b
        self._noise_rng = batch_stream(self.seed, 1)
        self._recorders: dict[int, TrajectoryRecorder] = {}

    @property
    def num_envs(self) -> int:
        return self.cfg.num_envs

    @property
    def obs_dim(self) -> int:
        return self.cfg.obs_dim

    @property
    def planar_state(self) -> PlanarState:
        return PlanarState(PlanarPose(self.x, self.y, self.theta), self.v_long, self.v_lat, self.omega)

    @property
    def clock(self) -> np.ndarray:
        '''Elapsed episode time (s) per environment.'''
        return self.steps * self.cfg.dynamics.dt

    # ------------------------------------------------------------------
    # Reset
    # ------------------------------------------------------------------

    def reset(self, env_index: int) -> np.ndarray:
        '''Start a new episode in one environment and return its first observation.'''
        if not 0 <= env_index < self.num_envs:
            raise InvalidArgumentError(f'environment index {env_index} out of range [0, {self.num_envs})')
        self._reset_one(env_index)
        return self._observe(np.array([env_index]))[0]

    def reset_all(self) -> np.ndarray:
        for i in range(self.num_envs):
            self._reset_one(i)
        return self._observe()

    def _reset_one(self, i: int) -> None:
        r = self.cfg.randomization
        self.episode[i] += 1
        rng = self.goal_spec.stream(i, int(self.episode[i]))
        self._rngs[i] = rng
        # fixed draw order keeps episodes reproducible
        self.mu[i] = rng.uniform(*r.mu_range)
        self.a_max[i] = self.cfg.dynamics.a_max * rng.uniform(*r.a_max_scale_range)
        self.theta[i] = wrap(rng.uniform(-r.init_heading_jitter, r.init_heading_jitter))
        self.v_long[i] = rng.uniform(*r.init_speed_range)
        self.x[i] = self.y[i] = self.v_lat[i] = self.omega[i] = 0.0
        self.k[i] = 0
        self.steps[i] = 0
        self.prev_action[i] = 0.0
        self.done[i] = False
        self.goals[i] = self._new_sequence(i, PlanarPose(0.0, 0.0, self.theta[i]))

        rec = self._recorders.get(i)
        if rec is not None and not rec.started:
            rec.add_goals(self.goals[i])
            self._record_row(i, 0.0, '-')

    def _new_sequence(self, i: int, start: PlanarPose) -> np.ndarray:
        if self.sequence_builder is not None:
            seq = self.sequence_builder(start)
        else:
            cc = self.cfg.curriculum
            if self.curriculum is not None:
                ranges = self.curriculum.ranges
            else:
                ranges = interp_ranges(cc.initial_c, cc.easy, cc.hard)
            seq = self.goal_spec.sample(start, ranges, self._rngs[i])
        if len(seq) != self.cfg.n_goals:
            raise DimensionMismatchError(f'sequence has {len(seq)} goals, environment expects {self.cfg.n_goals}')
        return seq.as_array()

    # ------------------------------------------------------------------
    # Step
    # ------------------------------------------------------------------

    def step(self, actions: np.ndarray) -> StepResult:
        '''
        Advance every live environment by one control step.

        :param actions: ``(num_envs, 3)`` accelerations ``(a_long, a_lat, alpha)``
        :raises DimensionMismatchError: for a wrongly shaped action batch
        '''
        cfg = self.cfg
        dyn = cfg.dynamics
        b = self.num_envs
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (b, 3):
            raise DimensionMismatchError(f'expected actions of shape ({b}, 3), got {actions.shape}')

        live = ~self.done
        # finished evaluation envs may receive garbage actions
        actions = np.where(live[:, None], actions, 0.0)
        cmd = clamp_command(ActionCmd.from_array(actions), dyn, self.a_max)
        new = step_dynamics(self.planar_state, cmd, dyn, self.a_max)
        self.x = np.where(live, new.pose.x, self.x)
        self.y = np.where(live, new.pose.y, self.y)
        self.theta = np.where(live, new.pose.theta, self.theta)
        self.v_long = np.where(live, new.v_long, self.v_long)
        self.v_lat = np.where(live, new.v_lat, self.v_lat)
        self.omega = np.where(live, new.omega, self.omega)
        self.steps = self.steps + live

        state = self.planar_state
        speed = np.asarray(state.speed)
        fallen = live & np.asarray(check_fall(state, dyn, self.mu), dtype=bool)

        switch = np.full(b, SWITCH_NONE)
        if cfg.switching:
            k_new, kinds = advance_counters(self.k, self.goals, state.pose, speed, self.omega, cfg.thresholds)
            allowed = live & ~fallen
            switch = np.where(allowed, kinds, SWITCH_NONE)
            self.k = np.where(allowed, k_new, self.k)
            if self.training and self.curriculum is not None:
                for _ in range(int(np.count_nonzero(switch))):
                    record_outcome(self.curriculum, True)
        complete = live & ~fallen & (self.k >= cfg.n_goals)
        time_up = live & ~fallen & (self.steps >= cfg.max_steps)

        cmd_arr = cmd.as_array()
        task = np.where(live, self._task_reward(state, speed), 0.0)
        reward = task + self._aux_reward(cmd_arr) - cfg.aux.fall_penalty * fallen
        reward = np.where(live, reward, 0.0)

        regenerate = self.training and cfg.regenerate_on_complete
        cause = np.full(b, int(TerminationCause.NONE))
        cause[time_up] = TerminationCause.TIMEOUT
        if not regenerate:
            cause[complete] = TerminationCause.SEQUENCE_COMPLETE
        cause[fallen] = TerminationCause.FALLEN
        terminated = cause != TerminationCause.NONE
        regenerated = complete & ~terminated if regenerate else np.zeros(b, dtype=bool)

        if self.training and self.curriculum is not None:
            self._account(terminated, fallen)

        self.prev_action = np.where(live[:, None], cmd_arr, self.prev_action)

        for i, rec in self._recorders.items():
            if rec.closed or not live[i]:
                continue
            if cause[i] != TerminationCause.NONE:
                event = _CAUSE_EVENTS[TerminationCause(cause[i])]
            elif regenerated[i]:
                event = 'complete'
            else:
                event = _SWITCH_EVENTS.get(int(switch[i]), '-')
            self._record_row(i, float(reward[i]), event)
            if terminated[i]:
                rec.close()

        for i in np.flatnonzero(regenerated):
            self.goals[i] = self._new_sequence(i, PlanarPose(self.x[i], self.y[i], self.theta[i]))
            self.k[i] = 0
            rec = self._recorders.get(i)
            if rec is not None and not rec.closed:
                rec.add_goals(self.goals[i])

        if self.training:
            for i in np.flatnonzero(terminated):
                self._reset_one(i)
        else:
            self.done |= terminated

        return StepResult(obs=self._observe(), reward=reward, task_reward=task, terminated=terminated,
                          cause=cause, k=self.k.copy(), switch=switch, speed=speed,
                          regenerated=regenerated, live=live)

    def _task_reward(self, state: PlanarState, speed: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        goal = current_goal(self.k, self.goals)
        if cfg.reward_mode == 'sequential':
            e = pose_error(state.pose, goal, cfg.sequential)
            return np.asarray(sequential_reward_from_error(self.k, cfg.n_goals, e, cfg.sequential.sigma_g))

        aux, base = cfg.aux, cfg.baseline
        t = self.clock
        d_xy, d_theta = planar_errors(state.pose, goal)
        d_xy = np.asarray(d_xy)
        r = aux.tracking_position * np.asarray(baseline_track_reward(d_xy, t, base))
        r = r + aux.tracking_heading * np.asarray(
            baseline_track_reward(d_theta, t, base, sigma=base.sigma_heading))

        far = d_xy > aux.far_distance
        vx, vy = state.world_velocity()
        dist = np.maximum(d_xy, 1e-9)
        toward = (vx * (goal.x - self.x) + vy * (goal.y - self.y)) / dist
        r = r + aux.forward * far * np.clip(toward / cfg.dynamics.v_max, 0.0, 1.0)

        final = t > base.T - base.T_r
        near = d_xy < aux.stand_radius
        r = r + aux.stand * (final & near) * np.asarray(kernel(speed, aux.stand_speed))
        r = r - aux.stall * (far & (speed < aux.stall_speed))
        return r

    def _aux_reward(self, cmd_arr: np.ndarray) -> np.ndarray:
        dyn, aux = self.cfg.dynamics, self.cfg.aux
        scale = np.stack([self.a_max, self.a_max, np.full(self.num_envs, dyn.alpha_max)], axis=1)
        delta = (cmd_arr - self.prev_action) / scale / 2.0
        rate = -aux.action_rate * np.mean(delta ** 2, axis=1)
        yaw = -aux.yaw_accel * (cmd_arr[:, 2] / dyn.alpha_max) ** 2
        return rate + yaw

    def _account(self, terminated: np.ndarray, fallen: np.ndarray) -> None:
        '''Record the unreached goals of finished episodes as failures.'''
        cfg = self.cfg
        for i in np.flatnonzero(terminated):
            if cfg.switching:
                record_sequence(self.curriculum, 0, cfg.n_goals - int(min(self.k[i], cfg.n_goals)))
                continue
            # single-goal baseline episodes are judged on their final state
            pose = PlanarPose(self.x[i], self.y[i], self.theta[i])
            goal = Goal(*self.goals[i, min(int(self.k[i]), cfg.n_goals - 1)])
            speed = math.hypot(self.v_long[i], self.v_lat[i])
            ok = not fallen[i] and bool(reached_direct(pose, goal, cfg.thresholds)
                                        or reached_stop(pose, speed, self.omega[i], goal, cfg.thresholds))
            record_outcome(self.curriculum, ok)

    # ------------------------------------------------------------------
    # Observation, recording and snapshots
    # ------------------------------------------------------------------

    def _observe(self, idx: Optional[np.ndarray] = None) -> np.ndarray:
        if idx is None:
            idx = np.arange(self.num_envs)
        state = PlanarState(PlanarPose(self.x[idx], self.y[idx], self.theta[idx]),
                            self.v_long[idx], self.v_lat[idx], self.omega[idx])
        rng = self._noise_rng
        return build_observation(state, self.k[idx], self.goals[idx], self.prev_action[idx],
                                 self.steps[idx], self.cfg, rng)

    def record(self, env_index: int, path: str | Path) -> TrajectoryRecorder:
        '''Log the next episode of ``env_index`` (the current one if already running) to ``path``.'''
        if not 0 <= env_index < self.num_envs:
            raise InvalidArgumentError(f'environment index {env_index} out of range')
        rec = TrajectoryRecorder(path)
        self._recorders[env_index] = rec
        if self.episode[env_index] >= 0:
            rec.add_goals(self.goals[env_index])
            self._record_row(env_index, 0.0, '-')
        return rec

    def _record_row(self, i: int, reward: float, event: str) -> None:
        self._recorders[i].add(self.clock[i], self.x[i], self.y[i], self.theta[i], self.v_long[i],
                               self.v_lat[i], self.omega[i], self.k[i], reward, event)

    def close_recorders(self) -> list[Path]:
        written = []
        for rec in self._recorders.values():
            out = rec.close()
            if out is not None:
                written.append(out)
        return written

    def snapshot(self) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
        '''Arrays and JSON-safe generator states that :meth:`restore` accepts.'''
        arrays = {name: np.array(getattr(self, name), copy=True) for name in _STATE_ARRAYS}
        meta = {
            'rngs': [None if g is None else generator_state(g) for g in self._rngs],
            'noise_rng': generator_state(self._noise_rng),
        }
        return arrays, meta

    def restore(self, arrays: dict[str, np.ndarray], meta: dict[str, Any]) -> None:
        for name in _STATE_ARRAYS:
            current = getattr(self, name)
            value = np.asarray(arrays[name])
            if value.shape != current.shape:
                raise DimensionMismatchError(f'snapshot {name} has shape {value.shape}, expected {current.shape}')
            setattr(self, name, value.astype(current.dtype))
        self._rngs = [None if s is None else restore_generator(s) for s in meta['rngs']]
        self._noise_rng = restore_generator(meta['noise_rng'])

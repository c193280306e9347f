'''
Task-level formulas for sequential goal reaching on the plane: angle wrapping,
the reward kernel, pose errors, the two reaching conditions, goal switching, the
sequential and single-goal rewards and the lookahead goal commands.

Every function is pure. Pose and goal fields may hold floats or equally shaped
numpy arrays; the formulas broadcast, so the same code serves a single robot and
a batch of environments.
'''

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import InvalidArgumentError


Scalar = Union[float, np.ndarray]

SWITCH_NONE = 0
SWITCH_DIRECT = 1
SWITCH_STOP = 2


def _out(value):
    '''Return python scalars for 0-d results and arrays otherwise.'''
    arr = np.asarray(value)
    if arr.ndim == 0:
        return arr.item()
    return arr


class Unbounded:
    '''
    The ``+inf`` threshold variant. A heading clause bounded by
    :data:`UNBOUNDED` is always satisfied.
    '''
    _instance: Unbounded | None = None

    def __new__(cls) -> Unbounded:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __reduce__(self):
        return (Unbounded, ())

    def __repr__(self) -> str:
        return 'UNBOUNDED'

    __str__ = __repr__


UNBOUNDED = Unbounded()

Bound = Union[float, Unbounded]


def heading_within(value: Scalar, bound: Bound):
    '''Strict ``value < bound`` where an :data:`UNBOUNDED` bound always holds.'''
    if isinstance(bound, Unbounded):
        return _out(np.ones_like(np.asarray(value), dtype=bool))
    return _out(np.asarray(value) < bound)


# ---------------------------------------------------------------------------
# Elementary formulas
# ---------------------------------------------------------------------------

def wrap(angle: Scalar) -> Scalar:
    '''
    Map an angle to ``(-pi, pi]``. Angles already inside the interval are
    returned unchanged so that ``wrap(wrap(a)) == wrap(a)`` holds exactly.

    :raises InvalidArgumentError: for NaN or infinite input
    '''
    a = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f'cannot wrap non-finite angle {angle!r}')
    shifted = np.pi - np.mod(np.pi - a, 2.0 * np.pi)
    shifted = np.where(shifted <= -np.pi, shifted + 2.0 * np.pi, shifted)
    inside = (a > -np.pi) & (a <= np.pi)
    return _out(np.where(inside, a, shifted))


def kernel(e: Scalar, sigma: Scalar) -> Scalar:
    '''
    Smooth reward kernel ``1 / (1 + (e/sigma)^2)``. Equals 1 at zero error and
    decreases strictly with ``e``.

    :param e:       non-negative error
    :param sigma:   positive width
    :raises InvalidArgumentError: if ``sigma <= 0`` or ``e < 0``
    '''
    s = np.asarray(sigma, dtype=float)
    err = np.asarray(e, dtype=float)
    if np.any(s <= 0):
        raise InvalidArgumentError(f'kernel width must be positive, got {sigma!r}')
    if np.any(err < 0):
        raise InvalidArgumentError('kernel error must be non-negative')
    return _out(1.0 / (1.0 + (err / s) ** 2))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarPose:
    '''
    SE(2) pose of the robot base. ``theta`` is wrapped on construction.

    :param x:       meters
    :param y:       meters
    :param theta:   radians
    '''
    x: Scalar = 0.0
    y: Scalar = 0.0
    theta: Scalar = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'theta', wrap(self.theta))


@dataclass(frozen=True)
class Goal:
    '''
    Target pose ``(x_g, y_g, theta_g)``; ``theta`` is wrapped on construction.
    '''
    x: Scalar
    y: Scalar
    theta: Scalar

    def __post_init__(self) -> None:
        object.__setattr__(self, 'theta', wrap(self.theta))

    def as_tuple(self) -> tuple[float, float, float]:
        return (float(self.x), float(self.y), float(self.theta))


@dataclass(frozen=True)
class GoalSequence:
    '''Ordered, immutable goals ``g_1 .. g_N`` with ``N >= 1``.'''
    goals: tuple[Goal, ...]

    def __post_init__(self) -> None:
        goals = tuple(self.goals)
        if len(goals) < 1:
            raise InvalidArgumentError('a goal sequence needs at least one goal')
        object.__setattr__(self, 'goals', goals)

    def __len__(self) -> int:
        return len(self.goals)

    def __getitem__(self, index: int) -> Goal:
        return self.goals[index]

    def __iter__(self) -> Iterator[Goal]:
        return iter(self.goals)

    def as_array(self) -> np.ndarray:
        '''Return an ``(N, 3)`` array of ``(x, y, theta)`` rows.'''
        return np.array([g.as_tuple() for g in self.goals], dtype=float)

    @classmethod
    def from_array(cls, rows: np.ndarray) -> GoalSequence:
        return cls(tuple(Goal(float(r[0]), float(r[1]), float(r[2])) for r in np.asarray(rows)))


class SwitchKind(str, enum.Enum):
    DIRECT = 'direct'
    STOP = 'stop'


@dataclass(frozen=True)
class GoalProgress:
    '''
    Goal counter ``k`` (goals reached so far) and the switch history of an
    episode as ``(step, kind)`` pairs.
    '''
    k: int = 0
    switch_events: tuple[tuple[int, SwitchKind], ...] = ()


@dataclass(frozen=True)
class ReachThresholds:
    '''
    Direct-switch thresholds ``(eps_xy, eps_theta)``, stop-switch thresholds
    ``(eps_xy_plus, eps_theta_plus)`` and the stationarity limits of the stop
    condition. Heading thresholds may be :data:`UNBOUNDED`.
    '''
    eps_xy: float = 0.1
    eps_theta: Bound = math.pi / 36
    eps_xy_plus: float = 0.1
    eps_theta_plus: Bound = math.pi / 36
    v_stop: float = 0.1
    omega_stop: float = 0.1

    def __post_init__(self) -> None:
        for name in ('eps_xy', 'eps_xy_plus', 'v_stop', 'omega_stop'):
            value = getattr(self, name)
            if isinstance(value, Unbounded) or not value > 0 or not math.isfinite(value):
                raise InvalidArgumentError(f'{name} must be a positive finite number, got {value!r}')
        for name in ('eps_theta', 'eps_theta_plus'):
            value = getattr(self, name)
            if not isinstance(value, Unbounded) and not value > 0:
                raise InvalidArgumentError(f'{name} must be positive or UNBOUNDED, got {value!r}')
        if self.eps_xy_plus < self.eps_xy:
            raise InvalidArgumentError('eps_xy_plus must not be smaller than eps_xy')
        if isinstance(self.eps_theta, Unbounded):
            if not isinstance(self.eps_theta_plus, Unbounded):
                raise InvalidArgumentError('eps_theta_plus must be UNBOUNDED when eps_theta is')
        elif not isinstance(self.eps_theta_plus, Unbounded) and self.eps_theta_plus < self.eps_theta:
            raise InvalidArgumentError('eps_theta_plus must not be smaller than eps_theta')


@dataclass(frozen=True)
class ThresholdPreset:
    '''A named pair of direct / stop threshold settings.'''
    name: str
    direct: tuple[float, Bound]
    stop: tuple[float, Bound]

    @property
    def thresholds(self) -> ReachThresholds:
        return ReachThresholds(eps_xy=self.direct[0], eps_theta=self.direct[1],
                               eps_xy_plus=self.stop[0], eps_theta_plus=self.stop[1])

    def label(self) -> str:
        def fmt(pair):
            xy, th = pair
            if isinstance(th, Unbounded):
                th_s = '+inf'
            else:
                th_s = f'pi/{round(math.pi / th):g}'
            return f'({xy:g}, {th_s})'
        return f'{fmt(self.direct)} {fmt(self.stop)}'


THRESHOLD_PRESETS: dict[str, ThresholdPreset] = {
    p.name: p for p in (
        # benchmark rows
        ThresholdPreset('loose', (0.5, math.pi / 3), (0.5, math.pi / 3)),
        ThresholdPreset('tight-direct', (0.1, math.pi / 36), (0.5, math.pi / 3)),
        ThresholdPreset('mid', (0.2, math.pi / 6), (0.2, math.pi / 6)),
        ThresholdPreset('standard', (0.2, math.pi / 6), (0.5, math.pi / 3)),
        ThresholdPreset('heading-free', (0.2, UNBOUNDED), (0.5, UNBOUNDED)),
        ThresholdPreset('wide', (0.5, UNBOUNDED), (0.5, UNBOUNDED)),
        # training
        ThresholdPreset('train-strict', (0.1, math.pi / 36), (0.1, math.pi / 36)),
        ThresholdPreset('train-heading-free', (0.1, UNBOUNDED), (0.1, UNBOUNDED)),
        ThresholdPreset('train-wide', (0.5, UNBOUNDED), (0.5, UNBOUNDED)),
    )
}

BENCH_PRESETS = ('loose', 'tight-direct', 'mid', 'standard')


@dataclass(frozen=True)
class SequentialRewardConfig:
    '''
    :param sigma_g:         kernel width applied to the pose error (m)
    :param sigma_theta:     width of the distance gate on the heading term (m)
    :param lambda_theta:    heading weight, 0 disables the heading term
    '''
    sigma_g: float = 1.0
    sigma_theta: float = 1.0
    lambda_theta: float = 0.5

    def __post_init__(self) -> None:
        if not (self.sigma_g > 0 and self.sigma_theta > 0):
            raise InvalidArgumentError('sigma_g and sigma_theta must be positive')
        if self.lambda_theta < 0:
            raise InvalidArgumentError('lambda_theta must be non-negative')


@dataclass(frozen=True)
class BaselineRewardConfig:
    '''
    Single-goal tracking reward settings.

    :param sigma_pos:       kernel width for the position error (m)
    :param sigma_heading:   kernel width for the heading error (rad)
    :param T:               episode length (s)
    :param T_r:             terminal reward window (s)
    '''
    sigma_pos: float = 0.5
    sigma_heading: float = math.pi / 6
    T: float = 8.0
    T_r: float = 2.0

    def __post_init__(self) -> None:
        if not (self.sigma_pos > 0 and self.sigma_heading > 0):
            raise InvalidArgumentError('baseline kernel widths must be positive')
        if not 0 < self.T_r < self.T:
            raise InvalidArgumentError('need 0 < T_r < T')


@dataclass(frozen=True)
class GoalCommand:
    '''Goal expressed in the robot base frame.'''
    dx: Scalar
    dy: Scalar
    dtheta: Scalar

    def as_tuple(self) -> tuple[float, float, float]:
        return (float(self.dx), float(self.dy), float(self.dtheta))


# ---------------------------------------------------------------------------
# Errors and reaching conditions
# ---------------------------------------------------------------------------

def planar_errors(pose: PlanarPose, goal: Goal) -> tuple[Scalar, Scalar]:
    '''Return ``(d_xy, d_theta)``: Euclidean distance and absolute wrapped heading error.'''
    d_xy = np.hypot(np.asarray(pose.x) - goal.x, np.asarray(pose.y) - goal.y)
    d_theta = np.abs(wrap(np.asarray(pose.theta) - goal.theta))
    return _out(d_xy), _out(d_theta)


def pose_error(pose: PlanarPose, goal: Goal, cfg: SequentialRewardConfig) -> Scalar:
    '''
    Multi-objective error ``d_xy + lambda_theta * kernel(d_xy, sigma_theta) * d_theta``.
    The heading term fades out while the robot is far from the goal.
    '''
    d_xy, d_theta = planar_errors(pose, goal)
    if cfg.lambda_theta == 0:
        return d_xy
    return _out(np.asarray(d_xy) + cfg.lambda_theta * np.asarray(kernel(d_xy, cfg.sigma_theta)) * d_theta)


def reached_direct(pose: PlanarPose, goal: Goal, th: ReachThresholds):
    '''Direct-switch condition: ``d_xy < eps_xy`` and ``d_theta < eps_theta``.'''
    d_xy, d_theta = planar_errors(pose, goal)
    return _out(np.logical_and(np.asarray(d_xy) < th.eps_xy, heading_within(d_theta, th.eps_theta)))


def reached_stop(pose: PlanarPose, v: Scalar, omega: Scalar, goal: Goal, th: ReachThresholds):
    '''
    Stop-switch condition: relaxed pose thresholds, only while nearly stationary
    (``v < v_stop`` and ``omega < omega_stop``, magnitudes).
    '''
    d_xy, d_theta = planar_errors(pose, goal)
    ok = np.asarray(d_xy) < th.eps_xy_plus
    ok = np.logical_and(ok, heading_within(d_theta, th.eps_theta_plus))
    ok = np.logical_and(ok, np.abs(np.asarray(v)) < th.v_stop)
    ok = np.logical_and(ok, np.abs(np.asarray(omega)) < th.omega_stop)
    return _out(ok)


def advance_goal(progress: GoalProgress, seq: GoalSequence, pose: PlanarPose,
                 v: float, omega: float, th: ReachThresholds,
                 step: int = 0) -> GoalProgress:
    '''
    Evaluate the reaching conditions for the current goal ``g_{k+1}`` once.
    ``k`` grows by at most one per call; the direct switch wins when both
    conditions hold.

    :param step:    time step stored with the switch event
    '''
    if progress.k >= len(seq):
        return progress
    goal = seq[progress.k]
    if reached_direct(pose, goal, th):
        kind = SwitchKind.DIRECT
    elif reached_stop(pose, v, omega, goal, th):
        kind = SwitchKind.STOP
    else:
        return progress
    return replace(progress, k=progress.k + 1,
                   switch_events=progress.switch_events + ((step, kind),))


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

def sequential_reward_from_error(k: Scalar, n_goals: int, e: Scalar, sigma_g: float) -> Scalar:
    '''``(k + kernel(e, sigma_g)) / N`` while goals remain, 1 once all are reached.'''
    k = np.asarray(k)
    e = np.where(k < n_goals, np.asarray(e, dtype=float), 0.0)
    partial = (k + np.asarray(kernel(e, sigma_g))) / n_goals
    return _out(np.where(k < n_goals, partial, 1.0))


def sequential_reward(progress: GoalProgress, seq: GoalSequence, pose: PlanarPose,
                      cfg: SequentialRewardConfig) -> float:
    '''Sequential goal-reaching reward measured against the current goal only.'''
    n = len(seq)
    if progress.k >= n:
        return 1.0
    e = pose_error(pose, seq[progress.k], cfg)
    return sequential_reward_from_error(progress.k, n, e, cfg.sigma_g)


def baseline_track_reward(e: Scalar, t: Scalar, cfg: BaselineRewardConfig,
                          sigma: float | None = None) -> Scalar:
    '''
    Time-gated single-goal tracking term ``kernel(e, sigma) * 1(t > T - T_r) / T_r``.

    :param sigma:   kernel width; defaults to ``cfg.sigma_pos``
    '''
    sigma = cfg.sigma_pos if sigma is None else sigma
    gate = np.asarray(t) > cfg.T - cfg.T_r
    return _out(np.asarray(kernel(e, sigma)) * gate / cfg.T_r)


# ---------------------------------------------------------------------------
# Lookahead commands
# ---------------------------------------------------------------------------

def goal_in_base_frame(pose: PlanarPose, goal: Goal) -> GoalCommand:
    '''Rotate the world-frame offset to ``goal`` by ``-theta`` and wrap the heading offset.'''
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    dxw = np.asarray(goal.x) - pose.x
    dyw = np.asarray(goal.y) - pose.y
    return GoalCommand(dx=_out(c * dxw + s * dyw),
                       dy=_out(-s * dxw + c * dyw),
                       dtheta=wrap(np.asarray(goal.theta) - pose.theta))


def lookahead_indices(k: Scalar, n_goals: int, n: int) -> np.ndarray:
    '''
    Zero-based goal indices ``min(k + i, N - 1)`` for ``i in 0..n-1``; the final
    goal is repeated once fewer than ``n`` goals remain.
    '''
    if n < 1:
        raise InvalidArgumentError(f'lookahead window must be >= 1, got {n}')
    k = np.asarray(k)
    return np.minimum(k[..., None] + np.arange(n), n_goals - 1)


def lookahead_commands(progress: GoalProgress, seq: GoalSequence, pose: PlanarPose,
                       n: int) -> list[GoalCommand]:
    '''Base-frame commands for the ``n`` goals of the lookahead window.'''
    idx = lookahead_indices(progress.k, len(seq), n)
    return [goal_in_base_frame(pose, seq[int(i)]) for i in idx]


# ---------------------------------------------------------------------------
# Batched helpers (goals held as (B, N, 3) arrays)
# ---------------------------------------------------------------------------

def current_goal(k: np.ndarray, goals: np.ndarray) -> Goal:
    '''Current goal per environment; environments with ``k == N`` keep ``g_N``.'''
    idx = np.minimum(k, goals.shape[1] - 1)
    rows = goals[np.arange(goals.shape[0]), idx]
    return Goal(rows[:, 0], rows[:, 1], rows[:, 2])


def advance_counters(k: np.ndarray, goals: np.ndarray, pose: PlanarPose,
                     v: np.ndarray, omega: np.ndarray,
                     th: ReachThresholds) -> tuple[np.ndarray, np.ndarray]:
    '''
    Batched :func:`advance_goal`. Returns the new counters and a switch code per
    environment (:data:`SWITCH_NONE`, :data:`SWITCH_DIRECT`, :data:`SWITCH_STOP`).
    '''
    k = np.asarray(k)
    active = k < goals.shape[1]
    goal = current_goal(k, goals)
    direct = np.logical_and(active, reached_direct(pose, goal, th))
    stop = active & ~direct & np.asarray(reached_stop(pose, v, omega, goal, th), dtype=bool)
    kinds = np.where(direct, SWITCH_DIRECT, np.where(stop, SWITCH_STOP, SWITCH_NONE))
    return k + (kinds != SWITCH_NONE), kinds


def lookahead_batch(k: np.ndarray, goals: np.ndarray, pose: PlanarPose, n: int) -> np.ndarray:
    '''Batched :func:`lookahead_commands` as a ``(B, n, 3)`` array.'''
    idx = lookahead_indices(k, goals.shape[1], n)
    sel = np.take_along_axis(goals, idx[..., None], axis=1)
    theta = np.asarray(pose.theta)[:, None]
    c, s = np.cos(theta), np.sin(theta)
    dxw = sel[..., 0] - np.asarray(pose.x)[:, None]
    dyw = sel[..., 1] - np.asarray(pose.y)[:, None]
    out = np.empty(sel.shape, dtype=float)
    out[..., 0] = c * dxw + s * dyw
    out[..., 1] = -s * dxw + c * dyw
    out[..., 2] = wrap(sel[..., 2] - theta)
    return out


def sequence_goals(seqs: Sequence[GoalSequence]) -> np.ndarray:
    '''Stack equally long sequences into a ``(B, N, 3)`` array.'''
    return np.stack([s.as_array() for s in seqs])

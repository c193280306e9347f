'''
Goal sequence sampling and the success-rate driven goal curriculum.

A goal is placed relative to a reference pose: a fixed pre-step along the
reference heading, then a travel segment of length ``l`` along the new heading
``theta_ref + dtheta``. The curriculum progress ``c`` interpolates the sampling
ranges of ``(dtheta, l)`` between an easy and a hard regime and moves by a fixed
step whenever the windowed goal success rate leaves the ``[0.2, 0.8]`` band.
'''

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import InvalidArgumentError
from .rng import episode_stream
from .task import Goal, GoalSequence, PlanarPose, wrap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingRanges:
    '''
    :param dtheta_range:    ``(lo, hi)`` signed turning offset (rad), inside ``[-pi, pi]``
    :param length_range:    ``(lo, hi)`` travel length (m), non-negative
    '''
    dtheta_range: tuple[float, float]
    length_range: tuple[float, float]

    def __post_init__(self) -> None:
        lo, hi = self.dtheta_range
        if not (-math.pi - 1e-12 <= lo <= hi <= math.pi + 1e-12):
            raise InvalidArgumentError(f'bad turning range {self.dtheta_range}')
        lo, hi = self.length_range
        if not 0 <= lo <= hi:
            raise InvalidArgumentError(f'bad length range {self.length_range}')


EASY_RANGES = SamplingRanges((0.0, 0.0), (1.5, 2.0))
HARD_RANGES = SamplingRanges((-math.pi, math.pi), (0.0, 4.5))


@dataclass(frozen=True)
class CurriculumConfig:
    '''
    :param enabled:             adapt ``c``; when false ``c`` stays at ``initial_c``
    :param initial_c:           starting progress
    :param step:                change of ``c`` per update
    :param expand_threshold:    success rate above which ``c`` grows
    :param contract_threshold:  success rate below which ``c`` shrinks
    :param window:              number of goal outcomes kept
    :param update_period:       environment steps between updates
    :param pre_step:            fixed advance along the reference heading (m)
    '''
    enabled: bool = True
    initial_c: float = 0.0
    step: float = 0.05
    expand_threshold: float = 0.8
    contract_threshold: float = 0.2
    window: int = 1000
    update_period: int = 480
    pre_step: float = 0.5
    easy_dtheta: tuple[float, float] = EASY_RANGES.dtheta_range
    easy_length: tuple[float, float] = EASY_RANGES.length_range
    hard_dtheta: tuple[float, float] = HARD_RANGES.dtheta_range
    hard_length: tuple[float, float] = HARD_RANGES.length_range

    def __post_init__(self) -> None:
        if not 0 <= self.initial_c <= 1:
            raise InvalidArgumentError('initial_c must lie in [0, 1]')
        if not 0 <= self.contract_threshold <= self.expand_threshold <= 1:
            raise InvalidArgumentError('need 0 <= contract_threshold <= expand_threshold <= 1')
        if self.step <= 0 or self.window < 1 or self.update_period < 1 or self.pre_step < 0:
            raise InvalidArgumentError('step, window and update_period must be positive')
        self.easy
        self.hard

    @property
    def easy(self) -> SamplingRanges:
        return SamplingRanges(tuple(self.easy_dtheta), tuple(self.easy_length))

    @property
    def hard(self) -> SamplingRanges:
        return SamplingRanges(tuple(self.hard_dtheta), tuple(self.hard_length))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeGoalSpec:
    '''
    How one environment builds its episode goals.

    :param pre_step:    advance along the reference heading before each turn (m)
    :param n_goals:     goals per sequence
    :param seed:        root of the per-episode random streams
    '''
    pre_step: float = 0.5
    n_goals: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_goals < 1:
            raise InvalidArgumentError('n_goals must be >= 1')
        if self.pre_step < 0:
            raise InvalidArgumentError('pre_step must be non-negative')

    def stream(self, env_index: int, episode: int) -> np.random.Generator:
        return episode_stream(self.seed, env_index, episode)

    def sample(self, start: PlanarPose, ranges: SamplingRanges, rng: np.random.Generator) -> GoalSequence:
        return sample_sequence(start, self.n_goals, ranges, rng, self.pre_step)


def interp_ranges(c: float, easy: SamplingRanges = EASY_RANGES,
                  hard: SamplingRanges = HARD_RANGES) -> SamplingRanges:
    '''
    Linearly interpolate every range endpoint between ``easy`` (``c = 0``) and
    ``hard`` (``c = 1``). ``c`` outside ``[0, 1]`` is clamped with a warning.
    '''
    if not 0.0 <= c <= 1.0:
        logger.warning('curriculum progress %r outside [0, 1], clamping', c)
        c = min(1.0, max(0.0, c))

    def lerp(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
        return (a[0] + c * (b[0] - a[0]), a[1] + c * (b[1] - a[1]))

    return SamplingRanges(lerp(easy.dtheta_range, hard.dtheta_range),
                          lerp(easy.length_range, hard.length_range))


def place_goal(ref: PlanarPose, dtheta: float, length: float, pre_step: float = 0.5) -> Goal:
    '''
    ``theta_g = wrap(theta_ref + dtheta)``,
    ``p_g = p_ref + pre_step * h(theta_ref) + length * h(theta_g)``.
    '''
    theta_g = wrap(ref.theta + dtheta)
    x = ref.x + pre_step * math.cos(ref.theta) + length * math.cos(theta_g)
    y = ref.y + pre_step * math.sin(ref.theta) + length * math.sin(theta_g)
    return Goal(x, y, theta_g)


def sample_goal(ref: PlanarPose, ranges: SamplingRanges, rng: np.random.Generator,
                pre_step: float = 0.5) -> Goal:
    '''Draw ``dtheta`` and ``length`` uniformly from ``ranges`` and place the goal.'''
    dtheta = float(rng.uniform(*ranges.dtheta_range))
    length = float(rng.uniform(*ranges.length_range))
    return place_goal(ref, dtheta, length, pre_step)


def sample_sequence(start: PlanarPose, n_goals: int, ranges: SamplingRanges,
                    rng: np.random.Generator, pre_step: float = 0.5) -> GoalSequence:
    '''
    Chain ``n_goals`` goals: the first relative to ``start``, each later one
    relative to the previous goal pose.
    '''
    if n_goals < 1:
        raise InvalidArgumentError('n_goals must be >= 1')
    goals = []
    ref = start
    for _ in range(n_goals):
        goal = sample_goal(ref, ranges, rng, pre_step)
        goals.append(goal)
        ref = PlanarPose(goal.x, goal.y, goal.theta)
    return GoalSequence(tuple(goals))


# ---------------------------------------------------------------------------
# Curriculum state
# ---------------------------------------------------------------------------

@dataclass
class CurriculumState:
    '''
    Shared curriculum accumulator. Outcomes may come from many environments but
    only one coordinator calls :func:`update_progress`.
    '''
    c: float = 0.0
    window: deque = field(default_factory=lambda: deque(maxlen=1000))
    step: float = 0.05
    expand_threshold: float = 0.8
    contract_threshold: float = 0.2
    update_period: int = 480
    enabled: bool = True
    easy: SamplingRanges = EASY_RANGES
    hard: SamplingRanges = HARD_RANGES
    steps_since_update: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: CurriculumConfig) -> CurriculumState:
        return cls(c=cfg.initial_c, window=deque(maxlen=cfg.window), step=cfg.step,
                   expand_threshold=cfg.expand_threshold,
                   contract_threshold=cfg.contract_threshold,
                   update_period=cfg.update_period, enabled=cfg.enabled,
                   easy=cfg.easy, hard=cfg.hard)

    @property
    def capacity(self) -> int:
        return self.window.maxlen

    @property
    def success_rate(self) -> Optional[float]:
        if not self.window:
            return None
        return sum(self.window) / len(self.window)

    @property
    def ranges(self) -> SamplingRanges:
        return interp_ranges(self.c, self.easy, self.hard)

    def state_dict(self) -> dict[str, Any]:
        return {
            'c': self.c,
            'window': [bool(v) for v in self.window],
            'steps_since_update': self.steps_since_update,
            'history': [list(h) for h in self.history],
        }

    def load_state_dict(self, state: dict[str, Any]) -> None:
        self.c = float(state['c'])
        self.window = deque((bool(v) for v in state['window']), maxlen=self.capacity)
        self.steps_since_update = int(state['steps_since_update'])
        self.history = [tuple(h) for h in state['history']]


def record_outcome(state: CurriculumState, success: bool) -> CurriculumState:
    '''Append one goal outcome, evicting the oldest entry at capacity.'''
    state.window.append(bool(success))
    return state


def record_sequence(state: CurriculumState, n_reached: int, n_goals: int) -> CurriculumState:
    '''
    Account for a finished sequence whose reached goals were not recorded yet:
    ``n_reached`` successes followed by ``n_goals - n_reached`` failures.
    '''
    for _ in range(n_reached):
        record_outcome(state, True)
    for _ in range(n_goals - n_reached):
        record_outcome(state, False)
    return state


def update_progress(state: CurriculumState, step: int = 0) -> CurriculumState:
    '''
    Move ``c`` by ``+step`` above the expansion threshold and by ``-step`` below
    the contraction threshold, clamped to ``[0, 1]``. An empty window or a
    disabled curriculum leaves ``c`` untouched.
    '''
    rate = state.success_rate
    if rate is None or not state.enabled:
        return state
    before = state.c
    if rate > state.expand_threshold:
        state.c = min(1.0, state.c + state.step)
    elif rate < state.contract_threshold:
        state.c = max(0.0, state.c - state.step)
    state.history.append((step, rate, before, state.c))
    if state.c != before:
        logger.debug('curriculum c %.3f -> %.3f (success rate %.3f)', before, state.c, rate)
    return state


def tick(state: CurriculumState, n_steps: int, step: int = 0) -> bool:
    '''
    Advance the update clock by ``n_steps`` environment steps and apply
    :func:`update_progress` at every completed period. Returns whether an update
    ran.
    '''
    state.steps_since_update += n_steps
    ran = False
    while state.steps_since_update >= state.update_period:
        state.steps_since_update -= state.update_period
        update_progress(state, step)
        ran = True
    return ran

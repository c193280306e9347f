'''
Traction-limited planar robot: a unicycle with a damped lateral slip channel,
acceleration commands, velocity saturation and a friction-circle fall test.

State fields may be floats or ``(B,)`` arrays; a whole batch of environments
is stepped by one call.
'''

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .task import PlanarPose, Scalar, _out, wrap


@dataclass(frozen=True)
class DynamicsConfig:
    '''
    :param dt:          control step (s), in ``(0, 0.1]``
    :param v_max:       planar speed limit (m/s)
    :param omega_max:   yaw-rate limit (rad/s)
    :param a_max:       longitudinal / lateral acceleration limit (m/s^2)
    :param alpha_max:   yaw acceleration limit (rad/s^2)
    :param mu:          nominal friction coefficient
    :param gravity:     m/s^2
    :param lat_damping: decay rate of lateral velocity (1/s)
    '''
    dt: float = 0.02
    v_max: float = 4.0
    omega_max: float = 4.0
    a_max: float = 6.0
    alpha_max: float = 12.0
    mu: float = 0.9
    gravity: float = 9.81
    lat_damping: float = 3.0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgumentError(f'{f.name} must be positive and finite, got {value!r}')
        if self.dt > 0.1:
            raise InvalidArgumentError(f'dt must be at most 0.1 s, got {self.dt}')


@dataclass(frozen=True)
class ActionCmd:
    '''Body-frame acceleration command: ``a_long``, ``a_lat`` (m/s^2) and ``alpha`` (rad/s^2).'''
    a_long: Scalar = 0.0
    a_lat: Scalar = 0.0
    alpha: Scalar = 0.0

    @classmethod
    def from_array(cls, arr: np.ndarray) -> ActionCmd:
        '''Split a ``(..., 3)`` array into the three channels.'''
        arr = np.asarray(arr, dtype=float)
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(np.asarray(self.a_long, dtype=float),
                                            np.asarray(self.a_lat, dtype=float),
                                            np.asarray(self.alpha, dtype=float)), axis=-1)


@dataclass(frozen=True)
class PlanarState:
    '''
    Pose plus body-frame velocities.

    :param pose:    world pose
    :param v_long:  longitudinal velocity (m/s)
    :param v_lat:   lateral velocity (m/s)
    :param omega:   yaw rate (rad/s)
    '''
    pose: PlanarPose = PlanarPose()
    v_long: Scalar = 0.0
    v_lat: Scalar = 0.0
    omega: Scalar = 0.0

    @property
    def speed(self) -> Scalar:
        return _out(np.hypot(self.v_long, self.v_lat))

    def world_velocity(self) -> tuple[Scalar, Scalar]:
        '''Planar velocity rotated into the world frame.'''
        c, s = np.cos(self.pose.theta), np.sin(self.pose.theta)
        return (_out(c * np.asarray(self.v_long) - s * np.asarray(self.v_lat)),
                _out(s * np.asarray(self.v_long) + c * np.asarray(self.v_lat)))

    @classmethod
    def at_rest(cls, batch: Optional[int] = None) -> PlanarState:
        '''Robot at the origin facing +x, optionally as a batch of ``batch`` copies.'''
        if batch is None:
            return cls()
        zero = np.zeros(batch)
        return cls(PlanarPose(zero.copy(), zero.copy(), zero.copy()), zero.copy(), zero.copy(), zero.copy())


def clamp_command(cmd: ActionCmd, cfg: DynamicsConfig, a_max: Optional[Scalar] = None) -> ActionCmd:
    '''
    Clamp each channel to its limit.

    :param a_max:   per-environment acceleration limit overriding ``cfg.a_max``
    :raises InvalidArgumentError: for non-finite commands
    '''
    arr = cmd.as_array()
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError('action command contains non-finite values')
    lim = cfg.a_max if a_max is None else np.asarray(a_max)
    return ActionCmd(_out(np.clip(cmd.a_long, -lim, lim)),
                     _out(np.clip(cmd.a_lat, -lim, lim)),
                     _out(np.clip(cmd.alpha, -cfg.alpha_max, cfg.alpha_max)))


def step_dynamics(state: PlanarState, cmd: ActionCmd, cfg: DynamicsConfig,
                  a_max: Optional[Scalar] = None) -> PlanarState:
    '''
    Advance one control step with semi-implicit Euler: lateral damping, then
    acceleration, then saturation of speed (by rescaling the planar velocity) and
    of yaw rate; the pose moves with the updated velocity.
    '''
    cmd = clamp_command(cmd, cfg, a_max)
    dt = cfg.dt

    v_lat = np.asarray(state.v_lat, dtype=float) * (1.0 - cfg.lat_damping * dt)
    v_long = np.asarray(state.v_long, dtype=float) + np.asarray(cmd.a_long) * dt
    v_lat = v_lat + np.asarray(cmd.a_lat) * dt
    omega = np.asarray(state.omega, dtype=float) + np.asarray(cmd.alpha) * dt

    speed = np.hypot(v_long, v_lat)
    scale = np.where(speed > cfg.v_max, cfg.v_max / np.maximum(speed, 1e-300), 1.0)
    v_long = v_long * scale
    v_lat = v_lat * scale
    omega = np.clip(omega, -cfg.omega_max, cfg.omega_max)

    theta = np.asarray(state.pose.theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    x = state.pose.x + (c * v_long - s * v_lat) * dt
    y = state.pose.y + (s * v_long + c * v_lat) * dt
    pose = PlanarPose(_out(x), _out(y), wrap(theta + omega * dt))
    return PlanarState(pose, _out(v_long), _out(v_lat), _out(omega))


def traction_demand(state: PlanarState) -> Scalar:
    '''Centripetal acceleration ``|speed * omega|``.'''
    return _out(np.abs(np.asarray(state.speed) * np.asarray(state.omega)))


def check_fall(state: PlanarState, cfg: DynamicsConfig, mu: Optional[Scalar] = None):
    '''
    True where the centripetal demand leaves the friction circle,
    ``|speed * omega| > mu * g``.

    :param mu:  per-environment friction overriding ``cfg.mu``
    '''
    mu = cfg.mu if mu is None else np.asarray(mu)
    return _out(np.asarray(traction_demand(state)) > mu * cfg.gravity)

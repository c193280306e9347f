'''
Actor-critic networks and PPO training.

The policy is a diagonal Gaussian over normalised accelerations; the
environment receives ``action * action_scale`` and clamps it. Everything runs
in double precision on the CPU so that fixed-seed runs repeat bit for bit.
'''

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn
from torch.distributions import Normal

from .checkpoint import Checkpoint
from .curriculum import tick
from .env import VecEnv
from .errors import CheckpointError, DimensionMismatchError, InvalidArgumentError, NonFiniteLossError
from .sim import DynamicsConfig

if TYPE_CHECKING:
    from .config import RunConfig

logger = logging.getLogger(__name__)

DTYPE = torch.float64
ACT_DIM = 3


@dataclass(frozen=True)
class PpoConfig:
    '''
    :param gamma:           discount
    :param lambda_gae:      GAE smoothing
    :param clip:            surrogate clip range
    :param epochs:          passes over each rollout
    :param minibatches:     minibatches per pass
    :param learning_rate:   Adam step size
    :param anneal_lr:       decay the step size linearly to zero over ``iterations``
    :param value_coef:      value-loss weight
    :param entropy_coef:    entropy-bonus weight
    :param max_grad_norm:   global gradient norm limit
    :param iterations:      training iterations
    :param steps_per_env:   rollout length per environment and iteration
    :param hidden_sizes:    MLP widths for actor and critic
    :param init_log_std:    initial log standard deviation of the policy
    :param checkpoint_every: iterations between checkpoints
    '''
    gamma: float = 0.99
    lambda_gae: float = 0.95
    clip: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    learning_rate: float = 3e-4
    anneal_lr: bool = False
    value_coef: float = 1.0
    entropy_coef: float = 0.005
    max_grad_norm: float = 1.0
    iterations: int = 1500
    steps_per_env: int = 48
    hidden_sizes: tuple[int, ...] = (128, 128)
    init_log_std: float = 0.0
    checkpoint_every: int = 100

    def __post_init__(self) -> None:
        if not (0 < self.gamma <= 1 and 0 < self.lambda_gae <= 1):
            raise InvalidArgumentError('gamma and lambda_gae must lie in (0, 1]')
        if not self.clip > 0:
            raise InvalidArgumentError('clip must be positive')
        if min(self.epochs, self.minibatches, self.steps_per_env, self.checkpoint_every) < 1:
            raise InvalidArgumentError('epochs, minibatches, steps_per_env and checkpoint_every must be >= 1')
        if self.iterations < 0 or self.learning_rate <= 0 or self.max_grad_norm <= 0:
            raise InvalidArgumentError('iterations must be >= 0, learning_rate and max_grad_norm positive')
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise InvalidArgumentError('hidden_sizes must be non-empty positive widths')


def action_scale(dyn: DynamicsConfig) -> np.ndarray:
    '''Physical accelerations per unit of policy output.'''
    return np.array([dyn.a_max, dyn.a_max, dyn.alpha_max])


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------

def _mlp(n_in: int, hidden: Sequence[int], n_out: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    for width in hidden:
        layers += [nn.Linear(n_in, width), nn.ELU()]
        n_in = width
    layers.append(nn.Linear(n_in, n_out))
    return nn.Sequential(*layers)


class ActorCritic(nn.Module):
    '''
    Separate ELU MLPs for the action mean and the state value, plus a
    state-independent log standard deviation.
    '''

    def __init__(self, obs_dim: int, hidden_sizes: Sequence[int] = (128, 128),
                 act_dim: int = ACT_DIM, init_log_std: float = 0.0) -> None:
        super().__init__()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.actor = _mlp(obs_dim, hidden_sizes, act_dim)
        self.critic = _mlp(obs_dim, hidden_sizes, 1)
        self.log_std = nn.Parameter(torch.full((act_dim,), float(init_log_std)))
        self.to(DTYPE)

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if obs.shape[-1] != self.obs_dim:
            raise DimensionMismatchError(f'observation has {obs.shape[-1]} channels, network expects {self.obs_dim}')
        return self.actor(obs), self.log_std, self.critic(obs).squeeze(-1)

    def distribution(self, obs: torch.Tensor) -> tuple[Normal, torch.Tensor]:
        mean, log_std, value = self(obs)
        return Normal(mean, log_std.exp().expand_as(mean)), value


def forward_actor_critic(model: ActorCritic, obs: Union[np.ndarray, torch.Tensor]
                         ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    '''``(action_mean, log_std, value)`` for a batch of observations.'''
    obs = torch.as_tensor(obs, dtype=DTYPE)
    if obs.ndim != 2:
        raise DimensionMismatchError(f'expected a (B, obs_dim) batch, got shape {tuple(obs.shape)}')
    return model(obs)


class RunningMeanStd:
    '''Running observation statistics (parallel variance update), float64.'''

    def __init__(self, dim: int, clip: float = 5.0, epsilon: float = 1e-4) -> None:
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = epsilon
        self.clip = clip

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=float)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean = self.mean + delta * b_count / total
        m2 = self.var * self.count + b_var * b_count + delta ** 2 * self.count * b_count / total
        self.var = m2 / total
        self.count = total

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return np.clip((obs - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)


# ---------------------------------------------------------------------------
# Advantages and losses
# ---------------------------------------------------------------------------

def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, gamma: float = 0.99,
        lam: float = 0.95, last_values: Union[float, np.ndarray] = 0.0) -> tuple[np.ndarray, np.ndarray]:
    '''
    Generalised advantage estimation over a ``(T,)`` or ``(T, B)`` rollout.

    :param dones:       1 where the episode ended at that step; bootstrapping stops there
    :param last_values: value of the observation following the last step
    :returns:           ``(advantages, returns)`` with ``returns = advantages + values``
    '''
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not rewards.shape == values.shape == dones.shape:
        raise DimensionMismatchError('rewards, values and dones must have the same shape')
    adv = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0]) if rewards.size else 0.0
    next_value = np.asarray(last_values, dtype=float)
    for t in reversed(range(rewards.shape[0])):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def clipped_surrogate(ratio: torch.Tensor, advantages: torch.Tensor, clip: float) -> torch.Tensor:
    '''Per-sample ``min(ratio * A, clip(ratio, 1 - clip, 1 + clip) * A)``.'''
    return torch.min(ratio * advantages, torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantages)


def ppo_loss(model: ActorCritic, obs: torch.Tensor, actions: torch.Tensor, old_log_probs: torch.Tensor,
             advantages: torch.Tensor, returns: torch.Tensor,
             cfg: PpoConfig) -> tuple[torch.Tensor, dict[str, float]]:
    '''
    Clipped surrogate loss with value regression and entropy bonus.

    :returns:   the scalar loss and a dict of detached statistics
    '''
    dist, value = model.distribution(obs)
    log_probs = dist.log_prob(actions).sum(-1)
    ratio = torch.exp(log_probs - old_log_probs)
    policy_loss = -clipped_surrogate(ratio, advantages, cfg.clip).mean()
    value_loss = (returns - value).pow(2).mean()
    entropy = dist.entropy().sum(-1).mean()
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    with torch.no_grad():
        log_ratio = log_probs - old_log_probs
        info = {
            'policy_loss': policy_loss.item(),
            'value_loss': value_loss.item(),
            'entropy': entropy.item(),
            'approx_kl': ((ratio - 1.0) - log_ratio).mean().item(),
            'clip_fraction': ((ratio - 1.0).abs() > cfg.clip).to(DTYPE).mean().item(),
        }
    return loss, info


@dataclass
class RolloutBatch:
    '''Flattened rollout tensors, one row per (step, environment).'''
    obs: torch.Tensor
    actions: torch.Tensor
    log_probs: torch.Tensor
    advantages: torch.Tensor
    returns: torch.Tensor

    def __len__(self) -> int:
        return self.obs.shape[0]


def ppo_update(model: ActorCritic, optimizer: torch.optim.Optimizer, batch: RolloutBatch, cfg: PpoConfig,
               generator: Optional[torch.Generator] = None) -> dict[str, float]:
    '''
    Run ``cfg.epochs`` passes of minibatch PPO over ``batch``.

    :raises NonFiniteLossError: on a non-finite minibatch loss, before that minibatch
                                steps, or when a parameter ends up non-finite
    '''
    adv = batch.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8) if len(batch) > 1 else adv - adv.mean()
    n = len(batch)
    size = max(1, n // cfg.minibatches)
    totals: dict[str, float] = {}
    updates = 0
    for epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=generator)
        for start in range(0, n, size):
            idx = perm[start:start + size]
            loss, info = ppo_loss(model, batch.obs[idx], batch.actions[idx], batch.log_probs[idx],
                                  adv[idx], batch.returns[idx], cfg)
            if not torch.isfinite(loss):
                raise NonFiniteLossError({'epoch': epoch, 'minibatch_start': start, **info,
                                          'log_std': model.log_std.detach().tolist()})
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()
            for key, value in info.items():
                totals[key] = totals.get(key, 0.0) + value
            updates += 1
    for name, p in model.named_parameters():
        if not torch.all(torch.isfinite(p)):
            raise NonFiniteLossError({'parameter': name, 'updates': updates})
    return {key: value / updates for key, value in totals.items()}


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class Trainer:
    '''
    Alternates rollout collection over a :class:`VecEnv` with PPO updates,
    streams one metrics record per iteration and checkpoints periodically.

    :param run_cfg: full run configuration
    :param out_dir: receives ``metrics.jsonl``, ``config.json`` and ``checkpoints/``
    :param resume:  checkpoint to continue from
    '''

    def __init__(self, run_cfg: RunConfig, out_dir: Union[str, Path],
                 resume: Optional[Union[str, Path, Checkpoint]] = None) -> None:
        self.cfg = run_cfg
        self.ppo: PpoConfig = run_cfg.ppo
        self.out_dir = Path(out_dir)
        env_cfg = run_cfg.env
        self.env = VecEnv(env_cfg, seed=run_cfg.seed)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(run_cfg.seed)
            self.model = ActorCritic(env_cfg.obs_dim, self.ppo.hidden_sizes, init_log_std=self.ppo.init_log_std)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=self.ppo.learning_rate)
        self.generator = torch.Generator().manual_seed(run_cfg.seed)
        self.obs_norm = RunningMeanStd(env_cfg.obs_dim)
        self.scale = action_scale(env_cfg.dynamics)
        self.iteration = 0
        self.obs = self.env.reset_all()
        self.ep_return = np.zeros(env_cfg.num_envs)

        if resume is not None:
            ckpt = resume if isinstance(resume, Checkpoint) else Checkpoint.load(resume)
            self.load_checkpoint(ckpt)

    @property
    def curriculum(self):
        return self.env.curriculum

    # ------------------------------------------------------------------

    def collect(self) -> tuple[RolloutBatch, dict[str, Any]]:
        '''Roll the policy out for ``steps_per_env`` steps in every environment.'''
        t_len, b, d = self.ppo.steps_per_env, self.env.num_envs, self.env.obs_dim
        obs_buf = np.zeros((t_len, b, d))
        act_buf = np.zeros((t_len, b, ACT_DIM))
        logp_buf = np.zeros((t_len, b))
        val_buf = np.zeros((t_len, b))
        rew_buf = np.zeros((t_len, b))
        done_buf = np.zeros((t_len, b))
        returns, falls = [], 0

        for t in range(t_len):
            self.obs_norm.update(self.obs)
            nobs = self.obs_norm.normalize(self.obs)
            with torch.no_grad():
                mean, log_std, value = self.model(torch.as_tensor(nobs, dtype=DTYPE))
                std = log_std.exp().expand_as(mean)
                action = mean + std * torch.randn(mean.shape, generator=self.generator, dtype=DTYPE)
                log_prob = Normal(mean, std).log_prob(action).sum(-1)
            result = self.env.step(action.numpy() * self.scale)

            values = value.numpy()
            # timeouts are truncations: bootstrap with the value of the pre-step state
            reward = result.reward + self.ppo.gamma * values * result.timeout
            obs_buf[t], act_buf[t], logp_buf[t], val_buf[t] = nobs, action.numpy(), log_prob.numpy(), values
            rew_buf[t], done_buf[t] = reward, result.terminated

            self.ep_return += result.reward
            for i in np.flatnonzero(result.terminated):
                returns.append(self.ep_return[i])
                self.ep_return[i] = 0.0
            falls += int(np.count_nonzero(result.fallen))
            self.obs = result.obs

        with torch.no_grad():
            last = self.model(torch.as_tensor(self.obs_norm.normalize(self.obs), dtype=DTYPE))[2].numpy()
        adv, ret = gae(rew_buf, val_buf, done_buf, self.ppo.gamma, self.ppo.lambda_gae, last)

        def flat(arr: np.ndarray) -> torch.Tensor:
            return torch.as_tensor(arr.reshape(t_len * b, *arr.shape[2:]), dtype=DTYPE)

        batch = RolloutBatch(flat(obs_buf), flat(act_buf), flat(logp_buf), flat(adv), flat(ret))
        episodes = len(returns)
        stats = {
            'mean_reward': float(rew_buf.mean()),
            'episodes': episodes,
            'mean_episode_return': float(np.mean(returns)) if returns else None,
            'fall_rate': falls / episodes if episodes else 0.0,
        }
        return batch, stats

    def iterate(self) -> dict[str, Any]:
        '''One rollout plus update; returns the metrics record.'''
        if self.ppo.anneal_lr:
            lr = self.ppo.learning_rate * (1.0 - self.iteration / max(1, self.ppo.iterations))
            for group in self.optimizer.param_groups:
                group['lr'] = lr
        batch, stats = self.collect()
        losses = ppo_update(self.model, self.optimizer, batch, self.ppo, self.generator)
        if self.curriculum is not None:
            tick(self.curriculum, self.ppo.steps_per_env, step=self.iteration)
        self.iteration += 1
        record = {
            'iteration': self.iteration,
            'c': self.curriculum.c if self.curriculum is not None else None,
            'success_rate': self.curriculum.success_rate if self.curriculum is not None else None,
            'learning_rate': self.optimizer.param_groups[0]['lr'],
            **stats,
            **losses,
        }
        return {k: _finite_or_none(v) if isinstance(v, float) else v for k, v in record.items()}

    def run(self) -> Checkpoint:
        '''Train until ``ppo.iterations`` and return the final checkpoint.'''
        metrics_path = self.out_dir / 'metrics.jsonl'
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / 'config.json').write_text(json.dumps(self.cfg.to_dict(), indent=2, sort_keys=True))
            self._truncate_metrics(metrics_path)
        except OSError as e:
            raise CheckpointError(f'cannot prepare output directory {self.out_dir}: {e}') from e

        while self.iteration < self.ppo.iterations:
            record = self.iterate()
            logger.info('iter %d  c=%s  success=%s  reward=%.4f  fall_rate=%.3f', record['iteration'],
                        record['c'], record['success_rate'], record['mean_reward'], record['fall_rate'])
            try:
                with metrics_path.open('a') as fh:
                    fh.write(json.dumps(record, sort_keys=True) + '\n')
            except OSError as e:
                raise CheckpointError(f'cannot write {metrics_path}: {e}') from e
            if self.iteration % self.ppo.checkpoint_every == 0:
                self.checkpoint().save(self.checkpoint_path(self.iteration))

        final = self.checkpoint()
        final.save(self.out_dir / 'final.ckpt')
        return final

    def _truncate_metrics(self, path: Path) -> None:
        '''Drop records past the current iteration so a resumed run appends cleanly.'''
        if not path.exists():
            return
        kept = [line for line in path.read_text().splitlines()
                if line.strip() and json.loads(line)['iteration'] <= self.iteration]
        path.write_text(''.join(line + '\n' for line in kept))

    def checkpoint_path(self, iteration: int) -> Path:
        return self.out_dir / 'checkpoints' / f'iter_{iteration:06d}.ckpt'

    # ------------------------------------------------------------------
    # Checkpointing
    # ------------------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        arrays: dict[str, np.ndarray] = {}
        for name, tensor in self.model.state_dict().items():
            arrays[f'params/{name}'] = tensor.detach().numpy().copy()
        arrays['obs_norm/mean'] = self.obs_norm.mean.copy()
        arrays['obs_norm/var'] = self.obs_norm.var.copy()
        arrays['obs_norm/count'] = np.array([self.obs_norm.count])

        opt = self.optimizer.state_dict()
        for idx, state in opt['state'].items():
            for key, value in state.items():
                arrays[f'optim/{idx}/{key}'] = np.asarray(torch.as_tensor(value).detach().numpy(), dtype=float)

        env_arrays, env_meta = self.env.snapshot()
        for name, value in env_arrays.items():
            arrays[f'env/{name}'] = value
        arrays['trainer/obs'] = self.obs.copy()
        arrays['trainer/ep_return'] = self.ep_return.copy()
        arrays['rng/torch'] = self.generator.get_state().numpy().astype(float)

        meta = {
            'env': env_meta,
            'curriculum': None if self.curriculum is None else self.curriculum.state_dict(),
            'optim_param_groups': opt['param_groups'],
        }
        return Checkpoint(config=self.cfg.to_dict(), config_hash=self.cfg.config_hash(),
                          iteration=self.iteration, arrays=arrays, meta=meta)

    def load_checkpoint(self, ckpt: Checkpoint) -> None:
        if ckpt.config_hash != self.cfg.config_hash():
            raise CheckpointError(f'checkpoint config hash {ckpt.config_hash} does not match run {self.cfg.config_hash()}')
        a = ckpt.arrays
        self.model.load_state_dict({name[len('params/'):]: torch.as_tensor(v, dtype=DTYPE)
                                    for name, v in a.items() if name.startswith('params/')})
        self.obs_norm.mean = a['obs_norm/mean'].copy()
        self.obs_norm.var = a['obs_norm/var'].copy()
        self.obs_norm.count = float(a['obs_norm/count'][0])

        state: dict[int, dict[str, torch.Tensor]] = {}
        for name, value in a.items():
            if not name.startswith('optim/'):
                continue
            _, idx, key = name.split('/')
            dtype = torch.float32 if key == 'step' else DTYPE
            state.setdefault(int(idx), {})[key] = torch.as_tensor(value, dtype=dtype)
        self.optimizer.load_state_dict({'state': state, 'param_groups': ckpt.meta['optim_param_groups']})

        self.env.restore({name[len('env/'):]: v for name, v in a.items() if name.startswith('env/')},
                         ckpt.meta['env'])
        if self.curriculum is not None and ckpt.meta.get('curriculum') is not None:
            self.curriculum.load_state_dict(ckpt.meta['curriculum'])
        self.obs = a['trainer/obs'].copy()
        self.ep_return = a['trainer/ep_return'].copy()
        self.generator.set_state(torch.as_tensor(a['rng/torch'].astype(np.uint8)))
        self.iteration = ckpt.iteration
        logger.info('resumed from iteration %d', self.iteration)


def train(run_cfg: RunConfig, out_dir: Union[str, Path],
          resume: Optional[Union[str, Path]] = None) -> Checkpoint:
    '''Build a :class:`Trainer` and run it to completion.'''
    return Trainer(run_cfg, out_dir, resume=resume).run()

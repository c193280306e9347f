import json
import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from seqnav.bench import (
    FIXED_SEQUENCES, BenchReport, CheckpointPolicy, FixedSequenceSpec, Policy, PursuitTurner,
    SpinDashPolicy, ZeroPolicy, build_fixed_sequence, eval_env_config, format_table, run_benchmark,
    sweep_thresholds, write_sweep,
)
from seqnav.config import run_config_from_dict
from seqnav.env import EnvConfig, RandomizationConfig, VecEnv
from seqnav.errors import CheckpointError, DimensionMismatchError, InvalidArgumentError
from seqnav.plot import load_trajectory
from seqnav.policy import Trainer
from seqnav.task import BENCH_PRESETS, THRESHOLD_PRESETS, PlanarPose, ReachThresholds, advance_counters, wrap


# ---------------------------------------------------------------------------
# Fixed sequences
# ---------------------------------------------------------------------------

def test_cw60_headings():
    seq = build_fixed_sequence(FIXED_SEQUENCES['cw60'])
    headings = [g.theta for g in seq]
    assert headings == pytest.approx([0.0, -math.pi / 3, -2 * math.pi / 3])
    assert seq[0].as_tuple() == pytest.approx((3.5, 0.0, 0.0))


def test_zigzag_returns_to_start_heading():
    seq = build_fixed_sequence(FIXED_SEQUENCES['zz120'])
    assert seq[2].theta == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('name', sorted(FIXED_SEQUENCES))
def test_segment_length_identity(name):
    seq = build_fixed_sequence(FIXED_SEQUENCES[name], PlanarPose(1.0, -2.0, 0.7))
    assert len(seq) == 3
    for a, b in zip(seq.goals, seq.goals[1:]):
        px = a.x + 0.5 * math.cos(a.theta)
        py = a.y + 0.5 * math.sin(a.theta)
        assert math.hypot(b.x - px, b.y - py) == pytest.approx(3.0)


@pytest.mark.parametrize('name,turn', [('cw60', math.pi / 3), ('ccw90', math.pi / 2),
                                       ('zz120', 2 * math.pi / 3), ('zz150', 5 * math.pi / 6)])
def test_turn_magnitudes(name, turn):
    seq = build_fixed_sequence(FIXED_SEQUENCES[name])
    turns = [abs(wrap(b.theta - a.theta)) for a, b in zip(seq.goals, seq.goals[1:])]
    assert turns == pytest.approx([turn, turn])


def test_turning_first_goal():
    spec = FixedSequenceSpec('t', (math.pi / 2, -math.pi / 2), turn_first_goal=True)
    seq = build_fixed_sequence(spec)
    assert [g.theta for g in seq] == pytest.approx([math.pi / 2, 0.0, math.pi / 2])


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

def test_policies_satisfy_protocol():
    assert isinstance(ZeroPolicy(), Policy)
    assert isinstance(PursuitTurner(), Policy)


def test_zero_policy_times_out():
    report = run_benchmark(ZeroPolicy(), 'cw60', 'loose', num_envs=8)
    assert (report.sr_pct, report.fr_pct, report.timeout_pct) == (0.0, 0.0, 100.0)
    assert report.time_mean_s is None
    assert report.policy == 'ZeroPolicy'
    assert report.records['goals_reached'].tolist() == [0] * 8


def test_spin_dash_always_falls():
    report = run_benchmark(SpinDashPolicy(), 'ccw90', 'standard', num_envs=8)
    assert report.fr_pct == 100.0
    assert report.records['time_s'].max() < 1.0


def test_loose_switching_carries_speed_into_turns():
    loose = run_benchmark(PursuitTurner(), 'zz150', 'loose', num_envs=4)
    tight = run_benchmark(PursuitTurner(), 'zz150', 'tight-direct', num_envs=4)
    assert loose.fr_pct > tight.fr_pct


def test_successful_pursuit_reports_times():
    report = run_benchmark(PursuitTurner(cruise_speed=2.0), 'cw60', 'wide', num_envs=16)
    assert report.sr_pct == 100.0
    assert 0 < report.time_mean_s < 10.0
    # start speeds differ per episode
    assert report.time_std_s > 0
    assert report.records['time_s'].nunique() > 1
    assert report.records['goals_reached'].tolist() == [3] * 16


def test_outcomes_partition_episodes(untrained_ckpt):
    policy = CheckpointPolicy(untrained_ckpt)
    assert policy.name == 'untrained'
    report = run_benchmark(policy, 'zz120', 'mid', num_envs=16, time_limit=1.0)
    assert report.n_episodes == 16
    assert report.fr_pct + report.sr_pct + report.timeout_pct == 100.0
    assert set(report.records['outcome']) <= {'fallen', 'success', 'timeout'}


def test_benchmark_is_deterministic(untrained_ckpt):
    policy = CheckpointPolicy(untrained_ckpt)
    a = run_benchmark(policy, 'cw60', 'standard', num_envs=4, time_limit=1.0, seed=3)
    b = run_benchmark(policy, 'cw60', 'standard', num_envs=4, time_limit=1.0, seed=3)
    pd.testing.assert_frame_equal(a.records, b.records)


def test_evaluation_starts_differ_per_episode():
    cfg = eval_env_config('loose', 2, num_envs=8)
    assert cfg.randomization == RandomizationConfig.evaluation()
    a, b = VecEnv(cfg, seed=0), VecEnv(cfg, seed=12345)
    a.reset_all()
    b.reset_all()
    assert len(np.unique(a.v_long)) == 8 and len(np.unique(a.mu)) == 8
    assert np.all((a.v_long >= 0) & (a.v_long <= 0.2)) and np.all(np.abs(a.theta) <= 0.05)
    assert not np.array_equal(a.v_long, b.v_long)
    # keyed by env and episode, not by batch size
    big = VecEnv(replace(cfg, num_envs=16), seed=0)
    big.reset_all()
    assert np.array_equal(big.v_long[:8], a.v_long) and np.array_equal(big.mu[:8], a.mu)
    assert eval_env_config('loose', 2, randomize=False).randomization == RandomizationConfig.none()


def test_benchmark_follows_the_seed(tmp_path):
    def run(seed, folder, **kwargs):
        report = run_benchmark(PursuitTurner(cruise_speed=2.0), 'ccw90', 'wide', num_envs=4, seed=seed,
                               record_traj=tmp_path / folder, record_count=1, **kwargs)
        return report, (tmp_path / folder / 'PursuitTurner_ccw90_wide_env000.csv').read_text()

    first, first_traj = run(0, 'a')
    again, again_traj = run(0, 'b')
    other, other_traj = run(12345, 'c')
    pd.testing.assert_frame_equal(first.records, again.records)
    assert first_traj == again_traj
    assert other_traj != first_traj

    flat, _ = run(0, 'd', randomize=False)
    assert flat.records['time_s'].nunique() == 1
    assert flat.time_std_s == pytest.approx(0.0, abs=1e-12)


@pytest.fixture
def slow_ckpt(tmp_path):
    '''Untrained policy whose run config caps speed at 1.5 m/s and acceleration at 2 m/s^2.'''
    cfg = run_config_from_dict({
        'seed': 7,
        'env': {'num_envs': 4, 'episode_length': 1.0, 'dynamics': {'v_max': 1.5, 'a_max': 2.0}},
        'ppo': {'iterations': 1, 'steps_per_env': 8, 'hidden_sizes': [16, 16]},
    })
    return Trainer(cfg, tmp_path / 'run').checkpoint().save(tmp_path / 'slow.ckpt')


def test_benchmark_runs_on_checkpoint_dynamics(slow_ckpt, tmp_path):
    policy = CheckpointPolicy(slow_ckpt)
    kwargs = dict(num_envs=4, time_limit=2.0, record_count=1)
    own = run_benchmark(policy, 'cw60', 'loose', record_traj=tmp_path / 'own', **kwargs)
    explicit = run_benchmark(policy, 'cw60', 'loose', env_cfg=policy.run_cfg.env,
                             record_traj=tmp_path / 'explicit', **kwargs)
    [swept] = sweep_thresholds({'slow': policy}, ['loose'], ['cw60'], record_traj=tmp_path / 'sweep', **kwargs)
    nominal = run_benchmark(policy, 'cw60', 'loose', env_cfg=EnvConfig(), record_traj=tmp_path / 'nominal',
                            **kwargs)

    pd.testing.assert_frame_equal(own.records, explicit.records)
    pd.testing.assert_frame_equal(own.records, swept.records)
    name = 'slow_cw60_loose_env000.csv'
    trajs = {d: (tmp_path / d / name).read_text() for d in ('own', 'explicit', 'sweep', 'nominal')}
    assert trajs['own'] == trajs['explicit'] == trajs['sweep']
    assert trajs['nominal'] != trajs['own']
    assert load_trajectory(tmp_path / 'sweep' / name).samples['speed'].max() <= 1.5 + 1e-9


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        run_benchmark(ZeroPolicy(obs_dim=8), 'cw60', 'loose', num_envs=2)
    with pytest.raises(InvalidArgumentError):
        run_benchmark(ZeroPolicy(), 'figure8', 'loose', num_envs=2)
    with pytest.raises(InvalidArgumentError):
        eval_env_config('nope', 2)


def test_checkpoint_policy_checks_observation(untrained_ckpt):
    policy = CheckpointPolicy(untrained_ckpt)
    assert policy.act(np.zeros((2, policy.obs_dim))).shape == (2, 3)
    with pytest.raises(DimensionMismatchError):
        policy.act(np.zeros((2, policy.obs_dim + 3)))


def test_unreadable_checkpoint(tmp_path):
    bad = tmp_path / 'bad.ckpt'
    bad.write_bytes(b'not a checkpoint')
    with pytest.raises(CheckpointError):
        CheckpointPolicy(bad)
    with pytest.raises(CheckpointError):
        CheckpointPolicy(tmp_path / 'missing.ckpt')


def test_recorded_benchmark_trajectories(tmp_path):
    run_benchmark(PursuitTurner(cruise_speed=2.0), 'ccw90', 'wide', num_envs=3, record_traj=tmp_path,
                  record_count=2)
    files = sorted(p.name for p in tmp_path.glob('*.csv'))
    assert files == ['PursuitTurner_ccw90_wide_env000.csv', 'PursuitTurner_ccw90_wide_env001.csv']
    traj = load_trajectory(tmp_path / files[0])
    assert traj.goals.shape == (3, 3)
    assert traj.samples['event'].iloc[-1] == 'complete'


def _replay(traj, th):
    '''Goal counter trace of a recorded episode re-run through the switching rule.'''
    rows = traj.samples.iloc[1:]
    rows = rows[rows['event'] != 'fall']
    k = np.zeros(1, dtype=int)
    trace = []
    for r in rows.itertuples():
        pose = PlanarPose(np.array([r.x]), np.array([r.y]), np.array([r.theta]))
        k, _ = advance_counters(k, traj.goals[None], pose, np.hypot([r.v_long], [r.v_lat]),
                                np.array([r.omega]), th)
        trace.append(int(k[0]))
    return np.array(trace), rows['k'].to_numpy()


def _scaled(th, factor):
    return ReachThresholds(th.eps_xy * factor, th.eps_theta * factor, th.eps_xy_plus * factor,
                           th.eps_theta_plus * factor, th.v_stop * factor, th.omega_stop * factor)


def test_looser_thresholds_never_lose_a_success(tmp_path):
    base = THRESHOLD_PRESETS['tight-direct'].thresholds
    for name in FIXED_SEQUENCES:
        run_benchmark(PursuitTurner(cruise_speed=2.0), name, 'tight-direct', num_envs=4, record_traj=tmp_path)
    paths = sorted(tmp_path.glob('*.csv'))
    assert len(paths) == 16

    successes = 0
    for path in paths:
        traj = load_trajectory(path)
        replayed, recorded = _replay(traj, base)
        assert np.array_equal(replayed, recorded)
        successes += int(recorded[-1] == 3)
        for factor in (1.5, 2.0):
            looser, _ = _replay(traj, _scaled(base, factor))
            assert np.all(looser >= replayed)
            if replayed[-1] == 3:
                assert np.argmax(looser == 3) <= np.argmax(replayed == 3)
    assert successes > 0


# ---------------------------------------------------------------------------
# Sweeps and reports
# ---------------------------------------------------------------------------

def test_report_from_records():
    records = pd.DataFrame({'env': range(4), 'outcome': ['success', 'success', 'fallen', 'timeout'],
                            'time_s': [4.0, 6.0, 1.0, 10.0], 'goals_reached': [3, 3, 1, 2]})
    report = BenchReport.from_records('p', 'cw60', 'loose', records)
    assert (report.fr_pct, report.sr_pct, report.timeout_pct) == (25.0, 50.0, 25.0)
    assert report.time_mean_s == 5.0
    assert report.time_std_s == 1.0
    assert report.time_median_s == 5.0


def test_rates_sum_to_exactly_100():
    for n in (3, 6, 7, 11, 49):
        for fallen in range(n + 1):
            for success in range(n + 1 - fallen):
                outcome = ['fallen'] * fallen + ['success'] * success + ['timeout'] * (n - fallen - success)
                records = pd.DataFrame({'env': range(n), 'outcome': outcome, 'time_s': 1.0, 'goals_reached': 0})
                report = BenchReport.from_records('p', 'cw60', 'loose', records)
                assert report.fr_pct + report.sr_pct + report.timeout_pct == 100.0
                assert report.fr_pct == 100.0 * fallen / n
                assert report.sr_pct == pytest.approx(100.0 * success / n)
                assert report.timeout_pct >= 0.0


def test_rates_for_six_episodes():
    records = pd.DataFrame({'env': range(6), 'outcome': ['fallen'] * 2 + ['success'] * 3 + ['timeout'],
                            'time_s': [1.0, 1.0, 4.0, 5.0, 6.0, 10.0], 'goals_reached': [0, 1, 3, 3, 3, 2]})
    report = BenchReport.from_records('p', 'zz120', 'mid', records)
    assert report.fr_pct + report.sr_pct + report.timeout_pct == 100.0
    assert report.sr_pct == 50.0
    assert report.time_median_s == 5.0


def test_sweep_covers_every_cell(tmp_path):
    policies = {'still': ZeroPolicy(), 'pursuit': PursuitTurner()}
    reports = sweep_thresholds(policies, BENCH_PRESETS, list(FIXED_SEQUENCES), num_envs=2, time_limit=0.2)
    assert len(reports) == 32
    assert {(r.policy, r.preset, r.sequence) for r in reports} == {
        (p, t, s) for p in policies for t in BENCH_PRESETS for s in FIXED_SEQUENCES}

    table = format_table(reports)
    assert '(0.5, pi/3) (0.5, pi/3)' in table
    assert '(0.1, pi/36) (0.5, pi/3)' in table
    for name in FIXED_SEQUENCES:
        assert name in table

    paths = write_sweep(reports, tmp_path / 'sweep')
    cells = json.loads(paths['json'].read_text())
    assert len(cells) == 32
    summary = pd.read_excel(paths['xlsx'], sheet_name='Summary')
    assert len(summary) == 32
    episodes = pd.read_excel(paths['xlsx'], sheet_name='Episodes')
    assert len(episodes) == 64
    assert paths['txt'].read_text().strip() == table.strip()


def test_format_table_without_reports():
    assert format_table([]) == 'No results.'

import math

import numpy as np
import pytest

from seqnav.errors import InvalidArgumentError
from seqnav.task import (
    BENCH_PRESETS, SWITCH_DIRECT, SWITCH_NONE, SWITCH_STOP, THRESHOLD_PRESETS, UNBOUNDED,
    BaselineRewardConfig, Goal, GoalProgress, GoalSequence, PlanarPose, ReachThresholds,
    SequentialRewardConfig, SwitchKind, advance_counters, advance_goal, baseline_track_reward, current_goal,
    goal_in_base_frame, kernel, lookahead_batch, lookahead_commands, lookahead_indices,
    pose_error, reached_direct, reached_stop, sequence_goals, sequential_reward,
    sequential_reward_from_error, wrap,
)

LOOSE = THRESHOLD_PRESETS['loose'].thresholds


# ---------------------------------------------------------------------------
# wrap / kernel
# ---------------------------------------------------------------------------

def test_wrap_examples():
    assert wrap(0.0) == 0.0
    assert wrap(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap(-math.pi) == pytest.approx(math.pi)
    assert wrap(math.pi) == math.pi


def test_wrap_is_idempotent(rng):
    a = rng.uniform(-50, 50, size=200)
    once = wrap(a)
    assert np.all(once > -math.pi) and np.all(once <= math.pi)
    assert np.array_equal(wrap(once), once)


def test_wrap_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        wrap(float('nan'))
    with pytest.raises(InvalidArgumentError):
        wrap(np.array([0.0, np.inf]))


def test_kernel_examples():
    assert kernel(0.0, 0.7) == 1.0
    assert kernel(0.7, 0.7) == pytest.approx(0.5)
    assert kernel(2.0, 1.0) == pytest.approx(0.2)


def test_kernel_strictly_decreasing():
    values = kernel(np.linspace(0, 5, 50), 1.0)
    assert np.all(np.diff(values) < 0)


def test_kernel_rejects_bad_width():
    with pytest.raises(InvalidArgumentError):
        kernel(1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        kernel(-1.0, 1.0)


def test_kernel_monotone_over_random_pairs(rng):
    sigma = rng.uniform(0.05, 5.0, size=10_000)
    e1 = rng.uniform(0, 10, size=10_000)
    e2 = rng.uniform(0, 10, size=10_000)
    lo, hi = np.minimum(e1, e2), np.maximum(e1, e2)
    k_lo, k_hi = kernel(lo, sigma), kernel(hi, sigma)
    assert np.all(k_lo >= k_hi)
    gap = hi - lo > 1e-6
    assert np.all(k_lo[gap] > k_hi[gap])
    assert np.all((k_hi > 0) & (k_lo <= 1))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

def test_pose_and_goal_wrap_heading():
    assert PlanarPose(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)
    assert Goal(1, 2, -math.pi).theta == pytest.approx(math.pi)


def test_empty_sequence_rejected():
    with pytest.raises(InvalidArgumentError):
        GoalSequence(())


def test_sequence_array_conversion():
    seq = GoalSequence((Goal(1, 2, 0.5), Goal(3, 4, -0.5)))
    arr = seq.as_array()
    assert arr.shape == (2, 3)
    assert GoalSequence.from_array(arr) == seq


@pytest.mark.parametrize('kwargs', [
    dict(eps_xy=0.0),
    dict(eps_xy=0.2, eps_xy_plus=0.1),
    dict(eps_theta=0.2, eps_theta_plus=0.1),
    dict(eps_theta=UNBOUNDED, eps_theta_plus=0.5),
])
def test_thresholds_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        ReachThresholds(**kwargs)


def test_threshold_preset_labels():
    assert THRESHOLD_PRESETS['loose'].label() == '(0.5, pi/3) (0.5, pi/3)'
    assert THRESHOLD_PRESETS['tight-direct'].label() == '(0.1, pi/36) (0.5, pi/3)'
    assert THRESHOLD_PRESETS['wide'].label() == '(0.5, +inf) (0.5, +inf)'
    assert all(name in THRESHOLD_PRESETS for name in BENCH_PRESETS)


# ---------------------------------------------------------------------------
# Errors and reaching conditions
# ---------------------------------------------------------------------------

def test_pose_error_examples():
    cfg = SequentialRewardConfig()
    pose = PlanarPose(0, 0, 0)
    assert pose_error(pose, Goal(0, 0, 0), cfg) == 0.0
    assert pose_error(pose, Goal(1, 0, math.pi / 2), cfg) == pytest.approx(1.3927, abs=1e-4)


def test_pose_error_without_heading_term():
    cfg = SequentialRewardConfig(lambda_theta=0.0)
    assert pose_error(PlanarPose(0, 0, 0), Goal(3, 4, 2.0), cfg) == 5.0


def test_heading_term_fades_with_distance():
    cfg = SequentialRewardConfig()
    near = pose_error(PlanarPose(0, 0, 0), Goal(0.1, 0, 1.0), cfg) - 0.1
    far = pose_error(PlanarPose(0, 0, 0), Goal(10, 0, 1.0), cfg) - 10
    assert near > far > 0


def test_reached_direct_examples():
    th = ReachThresholds()
    pose = PlanarPose(0, 0, 0)
    assert reached_direct(pose, Goal(0.05, 0, 0.01), th)
    assert not reached_direct(pose, Goal(0.1, 0, 0.0), th)
    free = ReachThresholds(eps_theta=UNBOUNDED, eps_theta_plus=UNBOUNDED)
    assert reached_direct(pose, Goal(0.05, 0, math.pi / 4), free)


def test_reached_stop_examples():
    pose = PlanarPose(0, 0, 0)
    goal = Goal(0.3, 0, 0.2)
    assert reached_stop(pose, 0.05, 0.05, goal, LOOSE)
    assert not reached_stop(pose, 0.2, 0.05, goal, LOOSE)
    assert not reached_stop(pose, 0.1, 0.05, goal, LOOSE)
    assert not reached_stop(pose, -0.05, -0.1, goal, LOOSE)


def test_reaching_conditions_broadcast():
    pose = PlanarPose(np.array([0.0, 0.05, 1.0]), np.zeros(3), np.zeros(3))
    out = reached_direct(pose, Goal(0.05, 0.0, 0.0), ReachThresholds())
    assert out.tolist() == [True, True, False]


def test_advance_goal_direct_switch():
    seq = GoalSequence((Goal(0, 0, 0), Goal(3, 0, 0)))
    progress = advance_goal(GoalProgress(), seq, PlanarPose(0.01, 0, 0), 2.0, 0.0, ReachThresholds(), step=7)
    assert progress.k == 1
    assert progress.switch_events == ((7, SwitchKind.DIRECT),)


def test_advance_goal_stop_switch():
    seq = GoalSequence((Goal(0.3, 0, 0), Goal(3, 0, 0)))
    th = THRESHOLD_PRESETS['tight-direct'].thresholds
    progress = advance_goal(GoalProgress(), seq, PlanarPose(0, 0, 0), 0.0, 0.0, th)
    assert progress.k == 1
    assert progress.switch_events[0][1] is SwitchKind.STOP


def test_advance_goal_complete_is_unchanged():
    seq = GoalSequence((Goal(0, 0, 0),))
    done = GoalProgress(k=1)
    assert advance_goal(done, seq, PlanarPose(), 0.0, 0.0, LOOSE) is done


def test_advance_goal_increments_once_per_call():
    seq = GoalSequence((Goal(0, 0, 0), Goal(0, 0, 0)))
    once = advance_goal(GoalProgress(), seq, PlanarPose(), 0.0, 0.0, LOOSE, step=0)
    assert once.k == 1
    twice = advance_goal(once, seq, PlanarPose(), 0.0, 0.0, LOOSE, step=1)
    assert twice.k == 2
    assert [s for s, _ in twice.switch_events] == [0, 1]


def test_advance_counters_matches_scalar():
    goals = np.array([[[0, 0, 0], [3, 0, 0]],
                      [[0.3, 0, 0], [3, 0, 0]],
                      [[5, 5, 0], [6, 6, 0]]], dtype=float)
    pose = PlanarPose(np.zeros(3), np.zeros(3), np.zeros(3))
    th = THRESHOLD_PRESETS['tight-direct'].thresholds
    k, kinds = advance_counters(np.zeros(3, dtype=int), goals, pose, np.zeros(3), np.zeros(3), th)
    assert k.tolist() == [1, 1, 0]
    assert kinds.tolist() == [SWITCH_DIRECT, SWITCH_STOP, SWITCH_NONE]


def test_advance_counters_leaves_finished_envs():
    goals = np.zeros((1, 2, 3))
    pose = PlanarPose(np.zeros(1), np.zeros(1), np.zeros(1))
    k, kinds = advance_counters(np.array([2]), goals, pose, np.zeros(1), np.zeros(1), LOOSE)
    assert k.tolist() == [2]
    assert kinds.tolist() == [SWITCH_NONE]


def _bound(value):
    return value if isinstance(value, (int, float)) else math.inf


def _reference_switches(samples, goals, th):
    '''Plain-Python goal counter over one trajectory: ``[(k, kind), ...]`` per sample.'''
    k, trace = 0, []
    for x, y, theta, v, omega in samples:
        kind = SWITCH_NONE
        if k < len(goals):
            gx, gy, gtheta = goals[k]
            d_xy = math.hypot(x - gx, y - gy)
            d_theta = abs(math.remainder(theta - gtheta, 2 * math.pi))
            if d_xy < th.eps_xy and d_theta < _bound(th.eps_theta):
                kind = SWITCH_DIRECT
            elif (d_xy < th.eps_xy_plus and d_theta < _bound(th.eps_theta_plus)
                  and abs(v) < th.v_stop and abs(omega) < th.omega_stop):
                kind = SWITCH_STOP
            if kind != SWITCH_NONE:
                k += 1
        trace.append((k, kind))
    return trace


def _random_runs(rng, n_runs, n_steps, n_goals):
    '''Trajectories that wander around each goal in turn, slowing down now and then.'''
    goals = np.stack([rng.uniform(-3, 3, size=(n_runs, n_goals)),
                      rng.uniform(-3, 3, size=(n_runs, n_goals)),
                      rng.uniform(-math.pi, math.pi, size=(n_runs, n_goals))], axis=-1)
    target = np.minimum(np.arange(n_steps) * n_goals // n_steps, n_goals - 1)
    near = goals[:, target]
    x = near[..., 0] + rng.normal(0, 0.3, size=(n_runs, n_steps))
    y = near[..., 1] + rng.normal(0, 0.3, size=(n_runs, n_steps))
    theta = wrap(near[..., 2] + rng.normal(0, 0.6, size=(n_runs, n_steps)))
    v = np.abs(rng.normal(0, 0.3, size=(n_runs, n_steps)))
    omega = rng.normal(0, 0.2, size=(n_runs, n_steps))
    return goals, np.stack([x, y, theta, v, omega], axis=-1)


@pytest.mark.parametrize('preset', [*BENCH_PRESETS, 'heading-free'])
def test_switching_matches_reference(rng, preset):
    th = THRESHOLD_PRESETS[preset].thresholds
    goals, samples = _random_runs(rng, 1000, 60, 3)
    k = np.zeros(1000, dtype=int)
    k_trace, kind_trace = [], []
    for t in range(samples.shape[1]):
        x, y, theta, v, omega = samples[:, t].T
        k_new, kinds = advance_counters(k, goals, PlanarPose(x, y, theta), v, omega, th)
        assert set(np.unique(k_new - k)) <= {0, 1}
        k = k_new
        k_trace.append(k)
        kind_trace.append(kinds)
    k_trace, kind_trace = np.stack(k_trace, axis=1), np.stack(kind_trace, axis=1)

    switched = 0
    for i in range(1000):
        expected = _reference_switches(samples[i], goals[i], th)
        assert k_trace[i].tolist() == [e[0] for e in expected]
        assert kind_trace[i].tolist() == [e[1] for e in expected]
        switched += expected[-1][0]
    # the runs must actually exercise the switch
    assert switched > 500


def test_scalar_switching_matches_reference(rng):
    th = THRESHOLD_PRESETS['standard'].thresholds
    goals, samples = _random_runs(rng, 20, 60, 3)
    for run_goals, run in zip(goals, samples):
        seq = GoalSequence.from_array(run_goals)
        progress = GoalProgress()
        trace = []
        for step, (x, y, theta, v, omega) in enumerate(run):
            progress = advance_goal(progress, seq, PlanarPose(x, y, theta), v, omega, th, step=step)
            trace.append(progress.k)
        assert trace == [k for k, _ in _reference_switches(run, run_goals, th)]


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

def test_sequential_reward_examples():
    assert sequential_reward_from_error(2, 2, 10.0, 1.0) == 1.0
    assert sequential_reward_from_error(0, 2, 0.0, 1.0) == pytest.approx(0.5)
    assert sequential_reward_from_error(1, 2, 1.0, 1.0) == pytest.approx(0.75)


def test_sequential_reward_bounds(rng):
    k = rng.integers(0, 4, size=500)
    e = rng.uniform(0, 20, size=500)
    r = sequential_reward_from_error(k, 3, e, 1.0)
    assert np.all(r > 0) and np.all(r <= 1)


@pytest.mark.parametrize('n_goals', [1, 2, 3, 5])
def test_reward_never_drops_across_a_switch(rng, n_goals):
    cfg = SequentialRewardConfig()
    th = THRESHOLD_PRESETS['standard'].thresholds
    b = 2500
    goals = np.stack([rng.uniform(-5, 5, size=(b, n_goals)),
                      rng.uniform(-5, 5, size=(b, n_goals)),
                      rng.uniform(-math.pi, math.pi, size=(b, n_goals))], axis=-1)
    k = rng.integers(0, n_goals, size=b)
    goal = goals[np.arange(b), k]
    # a pose inside the direct-switch region of the current goal
    r = 0.99 * th.eps_xy * np.sqrt(rng.uniform(size=b))
    phi = rng.uniform(-math.pi, math.pi, size=b)
    pose = PlanarPose(goal[:, 0] + r * np.cos(phi), goal[:, 1] + r * np.sin(phi),
                      goal[:, 2] + rng.uniform(-0.99, 0.99, size=b) * th.eps_theta)
    speed, omega = rng.uniform(0, 4, size=b), rng.uniform(-4, 4, size=b)

    k_after, kinds = advance_counters(k, goals, pose, speed, omega, th)
    assert np.all(kinds == SWITCH_DIRECT)
    assert np.array_equal(k_after, k + 1)

    before = sequential_reward_from_error(k, n_goals, pose_error(pose, current_goal(k, goals), cfg), cfg.sigma_g)
    after = sequential_reward_from_error(k_after, n_goals,
                                         pose_error(pose, current_goal(k_after, goals), cfg), cfg.sigma_g)
    assert np.all(before > k / n_goals) and np.all(before <= (k + 1) / n_goals)
    assert np.all(after >= before)
    last = k_after == n_goals
    assert np.all(after[last] == 1.0)
    assert np.all(after[~last] > k_after[~last] / n_goals)
    assert np.all(after[~last] <= (k_after[~last] + 1) / n_goals)


def test_sequential_reward_ignores_later_goals():
    cfg = SequentialRewardConfig()
    a = GoalSequence((Goal(1, 0, 0), Goal(5, 5, 1)))
    b = GoalSequence((Goal(1, 0, 0), Goal(-5, 2, -1)))
    pose = PlanarPose(0.2, 0.1, 0.3)
    assert sequential_reward(GoalProgress(), a, pose, cfg) == sequential_reward(GoalProgress(), b, pose, cfg)
    assert sequential_reward(GoalProgress(k=2), a, pose, cfg) == 1.0


def test_baseline_reward_examples():
    cfg = BaselineRewardConfig()
    assert baseline_track_reward(0.0, cfg.T - cfg.T_r, cfg) == 0.0
    assert baseline_track_reward(0.0, 7.0, cfg) == pytest.approx(1 / cfg.T_r)
    assert baseline_track_reward(cfg.sigma_pos, 7.0, cfg) == pytest.approx(0.5 / cfg.T_r)


def test_baseline_config_validation():
    with pytest.raises(InvalidArgumentError):
        BaselineRewardConfig(T=2.0, T_r=2.0)


def test_baseline_reward_silent_before_window(rng):
    cfg = BaselineRewardConfig()
    t = np.linspace(0.0, cfg.T - cfg.T_r, 100_001)
    e = rng.uniform(0, 5, size=t.size)
    assert np.all(baseline_track_reward(e, t, cfg) == 0.0)
    assert np.all(baseline_track_reward(e, t, cfg, sigma=0.1) == 0.0)
    late = np.linspace(cfg.T - cfg.T_r, cfg.T, 1001)[1:]
    assert np.all(baseline_track_reward(np.zeros(late.size), late, cfg) == 1.0 / cfg.T_r)


# ---------------------------------------------------------------------------
# Lookahead
# ---------------------------------------------------------------------------

def test_lookahead_indices():
    assert lookahead_indices(2, 3, 2).tolist() == [2, 2]
    assert lookahead_indices(0, 3, 2).tolist() == [0, 1]
    assert lookahead_indices(np.array([0, 1, 2]), 3, 3).tolist() == [[0, 1, 2], [1, 2, 2], [2, 2, 2]]
    with pytest.raises(InvalidArgumentError):
        lookahead_indices(0, 3, 0)


def test_goal_in_base_frame_rotation():
    cmd = goal_in_base_frame(PlanarPose(0, 0, math.pi / 2), Goal(0, 2, math.pi / 2))
    assert cmd.as_tuple() == pytest.approx((2.0, 0.0, 0.0), abs=1e-12)


def test_lookahead_commands_duplicate_final_goal():
    seq = GoalSequence((Goal(1, 0, 0), Goal(2, 1, 0.5), Goal(3, 3, 1.0)))
    cmds = lookahead_commands(GoalProgress(k=2), seq, PlanarPose(0.5, 0.2, 0.1), 2)
    assert cmds[0] == cmds[1]
    cmds = lookahead_commands(GoalProgress(k=0), seq, PlanarPose(), 2)
    assert cmds[0].as_tuple() == pytest.approx((1.0, 0.0, 0.0))
    assert cmds[1].as_tuple() == pytest.approx((2.0, 1.0, 0.5))


def test_lookahead_batch_matches_single(rng):
    seqs = [GoalSequence.from_array(rng.uniform(-3, 3, size=(3, 3))) for _ in range(4)]
    goals = sequence_goals(seqs)
    k = np.array([0, 1, 2, 3])
    pose = PlanarPose(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4), rng.uniform(-3, 3, 4))
    batch = lookahead_batch(k, goals, pose, 2)
    assert batch.shape == (4, 2, 3)
    for i in range(4):
        single = lookahead_commands(GoalProgress(k=int(k[i])), seqs[i],
                                    PlanarPose(pose.x[i], pose.y[i], pose.theta[i]), 2)
        assert batch[i] == pytest.approx(np.array([c.as_tuple() for c in single]), abs=1e-12)

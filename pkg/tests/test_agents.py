import math

import numpy as np
import pytest

from oracles import chi_square_uniform_ok, relative_error
from vsss_rl.agents import (ActorPolicy, DdpgConfig, DqnConfig, GreedyQPolicy, LearningCurve,
                            ddpg_update, dqn_select_action, dqn_td_targets, evaluate,
                            initial_policy, linear_epsilon, policy_from_checkpoint, soft_update,
                            train_ddpg, train_dqn)
from vsss_rl.agents.common import (CurvePoint, EpisodeRecord, EvalResult, eval_seeds,
                                   policy_checkpoint_bytes)
from vsss_rl.agents.ddpg import (DdpgNets, actor_objective_and_grads, critic_loss_and_grads,
                                 critic_targets, ou_noise_step)
from vsss_rl.agents.dqn import dqn_loss_and_grads, one_hot, q_spec
from vsss_rl.env import EnvConfig, SoccerEnv
from vsss_rl.nn import Batch, MlpParams, MlpSpec, mlp_forward
from vsss_rl.physics import ContractError


def table_q_net(table: np.ndarray) -> MlpParams:
    """A linear Q-network that returns row ``i`` of ``table`` for one-hot state ``i``."""
    n_states, n_actions = table.shape
    return MlpParams(MlpSpec((n_states, n_actions)), [table.astype(float)], [np.zeros(n_actions)])


def onehot_batch(states, actions, rewards, next_states, dones, n_states=3, n_actions=2):
    eye = np.eye(n_states)
    return Batch(eye[states], np.eye(n_actions)[actions], np.asarray(rewards, float),
                 eye[next_states], np.asarray(dones, float))


# ---------------------------------------------------------------- dqn pieces

def test_td_targets_hand_table():
    q = np.array([[1.0, 4.0], [-2.0, -3.0], [0.5, 0.25]])
    batch = onehot_batch([0, 1, 2], [0, 1, 0], [1.0, 0.5, -1.0], [1, 2, 0], [0, 0, 1])
    y = dqn_td_targets(batch, table_q_net(q), 0.9)
    assert y.tolist() == pytest.approx([1.0 + 0.9 * -2.0, 0.5 + 0.9 * 0.5, -1.0])


def test_td_targets_terminal_and_zero_gamma():
    q = np.array([[10.0, 20.0], [5.0, 1.0], [0.0, 0.0]])
    batch = onehot_batch([0, 1], [0, 0], [3.0, -2.0], [1, 0], [1, 0])
    assert dqn_td_targets(batch, table_q_net(q), 0.99)[0] == 3.0
    assert dqn_td_targets(batch, table_q_net(q), 0.0).tolist() == [3.0, -2.0]


def test_select_action_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert dqn_select_action(np.array([0.1, 0.9, 0.3]), 0.0, rng) == 1
    q = np.array([0.0, 1.0, 5.0, 2.0, 1.0, 5.0])
    assert dqn_select_action(q, 0.0, rng) == 2


def test_select_action_uniform_when_epsilon_one():
    rng = np.random.default_rng(1)
    q = np.array([0.0, 9.0, 1.0, 2.0, 3.0])
    counts = np.bincount([dqn_select_action(q, 1.0, rng) for _ in range(100_000)], minlength=5)
    assert chi_square_uniform_ok(counts)


def test_epsilon_schedule():
    vals = [linear_epsilon(t, 1.0, 0.05, 1000) for t in range(0, 1500, 10)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert linear_epsilon(1000, 1.0, 0.05, 1000) == 0.05
    assert linear_epsilon(0, 1.0, 0.05, 1000) == 1.0
    assert linear_epsilon(999, 1.0, 0.05, 1000) > 0.05


def test_dqn_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    spec = q_spec(4, 3, (5,))
    params = MlpParams.init(spec, rng)
    target = MlpParams.init(spec, rng)
    n = 6
    batch = Batch(rng.normal(size=(n, 4)), np.eye(3)[rng.integers(0, 3, n)], rng.normal(size=n),
                  rng.normal(size=(n, 4)), (rng.random(n) < 0.3).astype(float))
    _, grads = dqn_loss_and_grads(params, target, batch, 0.9, huber_delta=0.5)
    h = 1e-6
    for t, g in zip(params.tensors(), grads.tensors()):
        num = np.zeros_like(t)
        for i in np.ndindex(t.shape):
            old = t[i]
            t[i] = old + h
            up = dqn_loss_and_grads(params, target, batch, 0.9, 0.5)[0]
            t[i] = old - h
            down = dqn_loss_and_grads(params, target, batch, 0.9, 0.5)[0]
            t[i] = old
            num[i] = (up - down) / (2 * h)
        assert relative_error(g, num) < 1e-6


def test_one_hot():
    assert one_hot(2, 4).tolist() == [0, 0, 1, 0]


def test_dqn_config_validation():
    with pytest.raises(ContractError):
        DqnConfig(gamma=1.0)
    with pytest.raises(ContractError):
        DqnConfig(batch_size=0)


# ---------------------------------------------------------------- ddpg pieces

def test_soft_update_extremes_and_midpoint():
    spec = MlpSpec((1, 1))
    t = MlpParams(spec, [np.array([[2.0]])], [np.array([2.0])])
    s = MlpParams(spec, [np.array([[4.0]])], [np.array([4.0])])
    assert soft_update(t, s, 0.5).weights[0][0, 0] == 3.0
    assert soft_update(t, s, 0.0).weights[0][0, 0] == 2.0
    copy = soft_update(t, s, 1.0)
    x = np.array([1.7])
    assert mlp_forward(copy, x).tobytes() == mlp_forward(s, x).tobytes()


def test_ou_fixed_point_and_decay():
    rng = np.random.default_rng(0)
    x = np.array([0.3])
    assert ou_noise_step(x, 0.15, 0.3, 0.0, 1.0, rng).tolist() == [0.3]
    x = np.array([1.0])
    prev = 1.0
    for _ in range(50):
        x = ou_noise_step(x, 0.15, 0.0, 0.0, 1.0, rng)
        assert 0.0 < x[0] < prev
        prev = x[0]


def test_ou_stationary_variance():
    rng = np.random.default_rng(3)
    theta, sigma, dt = 0.15, 0.2, 0.01
    n = 1_000_000
    # draw all shocks at once and run the same Euler-Maruyama recursion
    x = np.zeros(64)
    samples = []
    for k in range(n // 64 + 2000):
        x = ou_noise_step(x, theta, 0.0, sigma, dt, rng)
        if k >= 2000 and k % 10 == 0:
            samples.append(x.copy())
    var = np.var(np.concatenate(samples))
    # stationary variance of the discretised process, which tends to sigma^2/(2 theta)
    a = 1 - theta * dt
    exact = sigma**2 * dt / (1 - a * a)
    assert exact == pytest.approx(sigma**2 / (2 * theta), rel=0.01)
    assert var == pytest.approx(sigma**2 / (2 * theta), rel=0.05)


def random_ddpg_batch(rng, n=64, obs_dim=5, gamma_done=0.2):
    return Batch(rng.normal(size=(n, obs_dim)), rng.uniform(-1, 1, size=(n, 2)), rng.normal(size=n),
                 rng.normal(size=(n, obs_dim)), (rng.random(n) < gamma_done).astype(float))


def test_critic_target_with_zero_gamma_is_reward():
    rng = np.random.default_rng(4)
    nets = DdpgNets.init(5, rng, (8,))
    batch = random_ddpg_batch(rng)
    assert np.array_equal(critic_targets(batch, nets, 0.0), batch.reward)


def test_actor_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    nets = DdpgNets.init(3, rng, (4,))
    obs = rng.normal(size=(7, 3))
    _, grads = actor_objective_and_grads(nets.actor, nets.critic, obs)

    def objective(actor):
        a = mlp_forward(actor, obs)
        return float(mlp_forward(nets.critic, np.hstack([obs, a])).mean())

    h = 1e-6
    for t, g in zip(nets.actor.tensors(), grads.tensors()):
        num = np.zeros_like(t)
        for i in np.ndindex(t.shape):
            old = t[i]
            t[i] = old + h
            up = objective(nets.actor)
            t[i] = old - h
            down = objective(nets.actor)
            t[i] = old
            num[i] = (up - down) / (2 * h)
        assert relative_error(g, num) < 1e-5


def test_tau_one_makes_targets_equal_online():
    rng = np.random.default_rng(6)
    nets = DdpgNets.init(5, rng, (8,))
    cfg = DdpgConfig(tau=1.0, batch_size=64)
    new, info = ddpg_update(random_ddpg_batch(rng), nets, cfg)
    for a, b in zip(new.actor.tensors(), new.actor_target.tensors()):
        assert np.array_equal(a, b)
    for a, b in zip(new.critic.tensors(), new.critic_target.tensors()):
        assert np.array_equal(a, b)
    assert set(info) == {"critic_loss", "actor_objective"}


def test_critic_loss_decreases_on_frozen_batch():
    rng = np.random.default_rng(7)
    nets = DdpgNets.init(5, rng, (16,))
    cfg = DdpgConfig(batch_size=64, critic_lr=1e-4)
    batch = random_ddpg_batch(rng)
    y = critic_targets(batch, nets, cfg.gamma)
    losses = []
    for _ in range(50):
        # the loss is measured against fixed targets; slow Polyak drift barely moves them
        loss, _ = critic_loss_and_grads(nets.critic, batch, y)
        losses.append(loss)
        nets, _ = ddpg_update(batch, nets, cfg)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_ddpg_batch_size_contract():
    rng = np.random.default_rng(8)
    nets = DdpgNets.init(5, rng, (8,))
    with pytest.raises(ContractError):
        ddpg_update(random_ddpg_batch(rng, n=10), nets, DdpgConfig(batch_size=64))


# ---------------------------------------------------------------- training loops

SMALL_ENV = EnvConfig(max_steps=50)


def test_dqn_warmup_only_leaves_params_untouched():
    cfg = DqnConfig(max_env_steps=300, warmup_steps=300, eval_every=300, eval_episodes=1,
                    hidden=(8,))
    result = train_dqn(lambda: SoccerEnv(SMALL_ENV), cfg, seed=1)
    assert result.buffer_size == 300
    assert result.losses == []
    from vsss_rl.seeding import substream

    fresh = MlpParams.init(q_spec(SMALL_ENV.obs_dim, 9, (8,)), substream(1, "dqn.init"))
    assert all(np.array_equal(a, b) for a, b in zip(fresh.tensors(), result.policy.params.tensors()))


def test_dqn_starts_from_given_params():
    cfg = DqnConfig(max_env_steps=300, warmup_steps=300, eval_every=300, eval_episodes=1,
                    hidden=(8,))
    init = MlpParams.init(q_spec(SMALL_ENV.obs_dim, 9, (8,)), np.random.default_rng(99))
    result = train_dqn(lambda: SoccerEnv(SMALL_ENV), cfg, seed=1, init_params=init)
    assert all(np.array_equal(a, b) for a, b in zip(init.tensors(), result.policy.params.tensors()))
    # training works on a copy
    assert result.policy.params is not init
    with pytest.raises(ContractError):
        train_dqn(lambda: SoccerEnv(SMALL_ENV), cfg, seed=1,
                  init_params=MlpParams.init(q_spec(SMALL_ENV.obs_dim, 9, (4,)), np.random.default_rng(0)))


def test_dqn_training_is_seed_deterministic(tmp_path):
    cfg = DqnConfig(max_env_steps=600, warmup_steps=100, eval_every=200, eval_episodes=2,
                    batch_size=16, hidden=(8,))
    a = train_dqn(lambda: SoccerEnv(SMALL_ENV), cfg, seed=3, out_dir=tmp_path / "a")
    b = train_dqn(lambda: SoccerEnv(SMALL_ENV), cfg, seed=3, out_dir=tmp_path / "b")
    assert a.curve.to_csv() == b.curve.to_csv()
    assert [p.env_step for p in a.curve.points] == [200, 400, 600]
    assert [p.read_bytes() for p in a.checkpoints] == [p.read_bytes() for p in b.checkpoints]
    c = train_dqn(lambda: SoccerEnv(SMALL_ENV), cfg, seed=4)
    assert a.losses != c.losses


def test_ddpg_training_is_seed_deterministic():
    env_cfg = EnvConfig(max_steps=50, action_mode="continuous")
    cfg = DdpgConfig(max_env_steps=300, warmup_steps=100, eval_every=150, eval_episodes=2,
                     batch_size=16, hidden=(8,))
    a = train_ddpg(lambda: SoccerEnv(env_cfg), cfg, seed=3)
    b = train_ddpg(lambda: SoccerEnv(env_cfg), cfg, seed=3)
    assert a.curve.to_csv() == b.curve.to_csv()
    assert a.losses == b.losses
    init = initial_policy(SoccerEnv(env_cfg), 3, (8,))
    assert init.params.spec == a.policy.params.spec


# ---------------------------------------------------------------- policies / eval

def test_policy_checkpoint_round_trip(tmp_path):
    q = GreedyQPolicy(MlpParams.init(q_spec(18, 9, (8,)), np.random.default_rng(0)))
    path = tmp_path / "q.ckpt"
    path.write_bytes(policy_checkpoint_bytes(q))
    loaded = policy_from_checkpoint(path)
    obs = np.linspace(-1, 1, 18)
    assert loaded(obs) == q(obs)

    actor = ActorPolicy(MlpParams.init(MlpSpec((18, 4, 2), "relu", "tanh"), np.random.default_rng(1)),
                        0.8, 12.0)
    path.write_bytes(policy_checkpoint_bytes(actor))
    assert policy_from_checkpoint(path)(obs) == actor(obs)


def test_eval_result_statistics():
    res = EvalResult([EpisodeRecord(0, 100, 9.0, "goal_for"), EpisodeRecord(1, 300, 8.0, "goal_for"),
                      EpisodeRecord(2, 500, -1.0, "max_steps")])
    assert res.success_rate == pytest.approx(2 / 3)
    assert res.steps_to_goal == [100, 300]
    assert res.mean_steps_to_goal == 200.0
    assert math.isnan(EvalResult([EpisodeRecord(0, 5, 0.0, "max_steps")]).mean_steps_to_goal)


def test_evaluate_is_repeatable():
    env = SoccerEnv(EnvConfig(max_steps=30, ball_jitter=0.1))
    q = GreedyQPolicy(MlpParams.init(q_spec(18, 9, (8,)), np.random.default_rng(2)))
    a = evaluate(env, q, eval_seeds(3))
    b = evaluate(env, q, eval_seeds(3))
    assert [vars(e) for e in a.episodes] == [vars(e) for e in b.episodes]


def test_learning_curve_csv_and_monotonic_steps():
    curve = LearningCurve()
    curve.add(CurvePoint(10, 1.5, 40.0, 0.5))
    curve.add(CurvePoint(20, 2.5, float("nan"), 0.0))
    with pytest.raises(ContractError):
        curve.add(CurvePoint(20, 0.0, 0.0))
    text = curve.to_csv(["manifest {}"])
    assert text.startswith("# manifest {}\nenv_step,")
    back = LearningCurve.from_csv(text)
    assert back.to_csv(["manifest {}"]) == text

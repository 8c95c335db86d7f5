import json
import math

import numpy as np
import pytest

from vsss_rl.config import ConfigError
from vsss_rl.env import (ALIGN, GOAL_FOR, MAX_STEPS, RECOVER, STOP_INDEX, STRIKE, ActionContinuous,
                         ActionDiscrete, EnvConfig, RewardWeights, SoccerEnv, build_observation,
                         compute_reward, discrete_action_table, env_config_from_kv,
                         env_config_to_kv, fixed_world, rollout, scripted_striker, striker_mode)
from vsss_rl.env.core import FIXED_BLUE_SPAWNS, OBS_BOUND
from vsss_rl.physics import BLUE, YELLOW, BallState, ContractError, RobotState, WorldState
from vsss_rl.seeding import substream


def test_fixed_spawn_layout():
    env = SoccerEnv(EnvConfig())
    for seed in (0, 1, 99):
        env.reset(seed)
        w = env.world
        assert (w.ball.x, w.ball.y) == (0.0, 0.0)
        r = w.robots_blue[0]
        assert (r.x, r.y, r.theta) == FIXED_BLUE_SPAWNS[0]
        y = w.robots_yellow[0]
        assert (y.x, y.y) == (-r.x, -r.y)
        assert y.theta == pytest.approx(-math.pi)


def test_random_spawn_determinism_and_variety():
    env = SoccerEnv(EnvConfig(spawn_mode="random", team_size=3))
    a = env.reset(5)
    b = env.reset(5)
    c = env.reset(6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_random_spawn_is_collision_free():
    cfg = EnvConfig(spawn_mode="random", team_size=3)
    env = SoccerEnv(cfg)
    rr, br = cfg.sim.robot_radius, cfg.sim.ball_radius
    for seed in range(30):
        env.reset(seed)
        w = env.world
        bodies = [(r.x, r.y) for r in w.robots]
        for i, (x, y) in enumerate(bodies):
            assert math.hypot(x - w.ball.x, y - w.ball.y) >= rr + br
            for x2, y2 in bodies[i + 1:]:
                assert math.hypot(x - x2, y - y2) >= 2 * rr


def test_observation_layout():
    cfg = EnvConfig()
    obs = build_observation(fixed_world(cfg), cfg)
    assert obs.shape == (18,) == (cfg.obs_dim,)
    assert obs[:4].tolist() == [0.0, 0.0, 0.0, 0.0]
    # robot at theta = 0 -> (sin, cos) = (0, 1)
    assert obs[8:10].tolist() == [0.0, 1.0]
    assert obs[4] == pytest.approx(-0.40 / 0.75)
    assert EnvConfig(team_size=3).obs_dim == 4 + 6 * 7


def test_yellow_view_is_mirrored():
    cfg = EnvConfig()
    w = fixed_world(cfg)
    w.ball = BallState(0.2, -0.1, 0.5, 0.3)
    blue = build_observation(w, cfg, BLUE, 0)
    yellow = build_observation(w, cfg, YELLOW, 0)
    # the symmetric spawn makes each side's own robot look identical
    assert np.allclose(blue[4:11], yellow[4:11], atol=1e-12)
    assert np.allclose(yellow[:4], -blue[:4])


def test_observation_bound_over_random_steps():
    cfg = EnvConfig(spawn_mode="random", opponent_policy="random", max_steps=400)
    env = SoccerEnv(cfg)
    rng = np.random.default_rng(0)
    steps = 0
    seed = 0
    while steps < 100_000:
        obs = env.reset(seed)
        seed += 1
        assert np.all(np.abs(obs) <= OBS_BOUND)
        done = False
        while not done:
            res = env.step(int(rng.integers(9)))
            assert np.all(np.abs(res.observation) <= OBS_BOUND)
            done = res.done
            steps += 1


def test_discrete_table():
    cfg = EnvConfig()
    table = discrete_action_table(cfg)
    assert len(table) == 9
    assert table[STOP_INDEX] == ActionContinuous(0.0, 0.0)
    assert all(abs(a.v) <= cfg.v_max and abs(a.omega) <= cfg.omega_max for a in table)
    assert any(a.v < 0 for a in table)


def test_stop_action_in_still_world():
    env = SoccerEnv(EnvConfig())
    env.reset(0)
    res = env.step(ActionContinuous(0.0, 0.0))
    assert res.reward.goal == 0.0
    assert not res.done
    assert res.reward.ball_potential == 0.0


def test_timeout_sets_done_reason():
    env = SoccerEnv(EnvConfig(max_steps=5))
    env.reset(0)
    results = [env.step(STOP_INDEX) for _ in range(5)]
    assert [r.done for r in results] == [False] * 4 + [True]
    assert results[-1].done_reason == MAX_STEPS


def test_goal_for_when_ball_enters_opponent_goal():
    cfg = EnvConfig()
    env = SoccerEnv(cfg)
    env.reset(0)
    env.world.ball = BallState(0.70, 0.0, 2.0, 0.0)
    res = env.step(STOP_INDEX)
    assert res.done and res.done_reason == GOAL_FOR
    assert res.reward.goal == cfg.reward_weights.goal == 10.0


def test_step_contract_errors():
    env = SoccerEnv(EnvConfig(max_steps=2))
    with pytest.raises(ContractError):
        env.step(0)
    for seed in range(20):
        env.reset(seed)
        while not env.step(seed % 9).done:
            pass
        with pytest.raises(ContractError):
            env.step(0)
    env.reset(0)
    with pytest.raises(ContractError):
        env.step(9)
    with pytest.raises(ContractError):
        env.step(ActionContinuous(float("nan"), 0.0))


def test_reward_identical_worlds():
    cfg = EnvConfig()
    w = fixed_world(cfg)
    rb = compute_reward(w, w, None, cfg.reward_weights, cfg)
    assert rb.ball_potential == 0.0 and rb.robot_ball_potential == 0.0 and rb.goal == 0.0


def test_reward_ball_moves_toward_goal():
    cfg = EnvConfig(reward_weights=RewardWeights(ball_potential=1.0))
    prev = fixed_world(cfg)
    curr = prev.copy()
    curr.ball.x += 0.1
    rb = compute_reward(prev, curr, None, cfg.reward_weights, cfg)
    assert rb.ball_potential == pytest.approx(0.1, abs=1e-12)


def test_reward_goal_component_defaults():
    cfg = EnvConfig()
    w = fixed_world(cfg)
    assert compute_reward(w, w, GOAL_FOR, cfg.reward_weights, cfg).goal == 10.0
    assert compute_reward(w, w, "goal_against", cfg.reward_weights, cfg).goal == -10.0


def test_shaping_telescopes_over_episode():
    cfg = EnvConfig(max_steps=300, ball_jitter=0.2)
    env = SoccerEnv(cfg, record=True)
    rng = np.random.default_rng(4)
    results = rollout(env, lambda obs: int(rng.integers(9)), seed=3)
    first, last = WorldState.from_bytes(env.snapshots[0]), WorldState.from_bytes(env.snapshots[-1])
    gx = cfg.field.half_length

    def phi_ball(w):
        return -math.hypot(w.ball.x - gx, w.ball.y)

    def phi_robot(w):
        r = w.robots_blue[0]
        return -math.hypot(w.ball.x - r.x, w.ball.y - r.y)

    total_b = sum(r.reward.ball_potential for r in results)
    total_r = sum(r.reward.robot_ball_potential for r in results)
    assert total_b == pytest.approx(phi_ball(last) - phi_ball(first), abs=1e-9)
    assert total_r == pytest.approx(0.2 * (phi_robot(last) - phi_robot(first)), abs=1e-9)


def test_episode_determinism():
    cfg = EnvConfig(opponent_policy="random", ball_jitter=0.1, max_steps=200)

    def go():
        env = SoccerEnv(cfg, record=True)
        rng = substream(1, "test.policy")
        res = rollout(env, lambda obs: int(rng.integers(9)), seed=8)
        return env.snapshots, [r.reward for r in res], res[-1].done_reason

    assert go() == go()


def test_jsonl_log(tmp_path):
    log = tmp_path / "ep.jsonl"
    env = SoccerEnv(EnvConfig(max_steps=4, log_path=str(log)))
    rollout(env, lambda obs: 0, seed=0)
    env.close()
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert [l["step"] for l in lines] == [1, 2, 3, 4]
    assert lines[-1]["done_reason"] == MAX_STEPS


def test_config_validation_and_kv_round_trip():
    with pytest.raises(ConfigError):
        EnvConfig(action_mode="joystick").validate()
    with pytest.raises(ConfigError):
        env_config_from_kv({"env.bogus": "1"})
    cfg = EnvConfig(max_steps=77, ball_jitter=0.05, opponent_policy="scripted_striker")
    kv = {k: str(v) for k, v in env_config_to_kv(cfg).items()}
    assert env_config_from_kv(kv) == cfg


# ---------------------------------------------------------------- striker

def world_with(robot, ball=(0.0, 0.0)):
    return WorldState(0, [RobotState(*robot)], [RobotState(0.6, 0.5, 0.0)], BallState(*ball))


def test_striker_strikes_when_ball_is_between_robot_and_goal():
    cfg = EnvConfig()
    w = world_with((-0.2, 0.0, 0.0))
    assert striker_mode(w, BLUE, cfg) == STRIKE
    act = scripted_striker(w, BLUE, cfg)
    assert act.v > 0


def test_striker_aligns_when_misaligned_on_line():
    w = world_with((-0.2, 0.0, math.pi / 2))
    assert striker_mode(w, BLUE, EnvConfig()) == ALIGN


def test_striker_recovers_when_ball_is_behind():
    w = world_with((0.2, 0.0, 0.0))
    assert striker_mode(w, BLUE, EnvConfig()) == RECOVER


def test_striker_is_deterministic_and_side_symmetric():
    cfg = EnvConfig()
    w = world_with((-0.3, 0.1, 0.4), (0.05, -0.02))
    assert scripted_striker(w, BLUE, cfg) == scripted_striker(w.copy(), BLUE, cfg)
    # the same situation seen from yellow, rotated by pi
    m = WorldState(0, [RobotState(0.6, 0.5)], [RobotState(0.3, -0.1, 0.4 - math.pi)],
                   BallState(-0.05, 0.02))
    a, b = scripted_striker(w, BLUE, cfg), scripted_striker(m, YELLOW, cfg)
    assert a.v == pytest.approx(b.v, abs=1e-12)
    assert a.omega == pytest.approx(b.omega, abs=1e-12)


def test_striker_competence_floor():
    cfg = EnvConfig(max_steps=500)
    rng = np.random.default_rng(21)
    scored = 0
    trials = 40
    for k in range(trials):
        w = fixed_world(cfg)
        w.ball = BallState(float(rng.uniform(0.05, 0.6)), float(rng.uniform(-0.55, 0.55)))
        env = SoccerEnv(cfg)
        env.reset(k)
        env.world = w
        res = None
        while not env.done:
            res = env.step(scripted_striker(env.world, BLUE, cfg))
        scored += res.done_reason == GOAL_FOR
    assert scored >= 0.9 * trials

import json
import locale
from pathlib import Path

import numpy as np
import pytest

from oracles import binomial_two_sided_p
from vsss_rl.env import EnvConfig, SoccerEnv, rollout
from vsss_rl.harness import (EMPTY_STATS, ReplayError, ReplayFile, RunManifest, ScriptedPlayer,
                             StationaryPlayer, export_replay, read_replay, run_match,
                             steps_to_goal_stats, write_atomic, write_json, write_sidecar)
from vsss_rl.harness.plots import plot_match
from vsss_rl.physics import ContractError, WorldState
from vsss_rl.seeding import substream

MATCH_CFG = EnvConfig(max_steps=400, ball_jitter=0.1)


# ---------------------------------------------------------------- stats

def test_single_episode_stats():
    assert steps_to_goal_stats([100]).format() == "100.0 ± 0.0"


def test_two_point_population_std():
    assert steps_to_goal_stats([400, 600]).format() == "500.0 ± 100.0"


def test_reported_style_formatting():
    # published-style figures must print verbatim
    from vsss_rl.harness import StepsStats

    assert StepsStats(10, 547.2, 233.6).format() == "547.2 ± 233.6"
    assert StepsStats(10, 456.8, 147.2).format() == "456.8 ± 147.2"


def test_stats_skip_non_scoring_records():
    class Rec:
        def __init__(self, steps, scored):
            self.steps, self.scored = steps, scored

    stats = steps_to_goal_stats([Rec(10, True), Rec(999, False), Rec(30, True)])
    assert (stats.n, stats.mean, stats.std) == (2, 20.0, 10.0)


def test_no_scoring_episodes_is_explicitly_empty():
    stats = steps_to_goal_stats([])
    assert stats is EMPTY_STATS and stats.empty
    assert stats.format() == "n/a (no scoring episodes)"
    assert stats.as_dict()["mean"] is None


def test_formatting_ignores_locale():
    old = locale.setlocale(locale.LC_NUMERIC)
    for name in ("de_DE.UTF-8", "fr_FR.UTF-8"):
        try:
            locale.setlocale(locale.LC_NUMERIC, name)
        except locale.Error:
            continue
        try:
            assert steps_to_goal_stats([1, 2]).format() == "1.5 ± 0.5"
        finally:
            locale.setlocale(locale.LC_NUMERIC, old)
    assert steps_to_goal_stats([1, 2]).format() == "1.5 ± 0.5"


# ---------------------------------------------------------------- matches

def test_zero_episodes_rejected():
    with pytest.raises(ContractError):
        run_match(ScriptedPlayer(), StationaryPlayer(), MATCH_CFG, 0, 1)


def test_striker_beats_stationary_opponent():
    stats = run_match(ScriptedPlayer(), StationaryPlayer(), MATCH_CFG, 50, 3)
    assert stats.goals_a >= 45
    assert stats.goals_a + stats.goals_b + stats.timeouts == stats.episodes == 50


def test_match_tallies_are_conserved_and_sides_alternate():
    stats = run_match(ScriptedPlayer(), ScriptedPlayer(), MATCH_CFG, 12, 5)
    assert stats.goals_a + stats.goals_b + stats.timeouts == 12
    assert [r.a_side for r in stats.records] == ["blue", "yellow"] * 6
    # each spawn seed is played once from each side
    seeds = [r.seed for r in stats.records]
    assert seeds[0::2] == seeds[1::2]
    scored = [r.steps for r in stats.records if r.winner == "a"]
    assert stats.steps_a.n == len(scored)


def test_self_play_is_balanced():
    stats = run_match(ScriptedPlayer(), ScriptedPlayer(), MATCH_CFG, 100, 11)
    decisive = stats.goals_a + stats.goals_b
    assert decisive > 0
    assert binomial_two_sided_p(stats.goals_a, decisive, 0.5) > 0.01


def test_match_is_deterministic_per_seed():
    a = run_match(ScriptedPlayer(), StationaryPlayer(), MATCH_CFG, 6, 2).to_json()
    b = run_match(ScriptedPlayer(), StationaryPlayer(), MATCH_CFG, 6, 2).to_json()
    assert a == b


def test_match_plot_is_deterministic(tmp_path):
    stats = run_match(ScriptedPlayer(), StationaryPlayer(), MATCH_CFG, 4, 2)
    man = RunManifest.create("match", {"x": 1}, [2], argv=[])
    plot_match(stats, tmp_path / "a.png", ("striker", "stationary"), man)
    plot_match(stats, tmp_path / "b.png", ("striker", "stationary"), man)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert (tmp_path / "a.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------- replays

def recorded_episode(seed=4, max_steps=120):
    cfg = EnvConfig(max_steps=max_steps, ball_jitter=0.1)
    env = SoccerEnv(cfg, record=True)
    rng = substream(seed, "test.policy")
    results = rollout(env, lambda obs: int(rng.integers(9)), seed=seed)
    return cfg, env.snapshots, len(results)


def test_replay_round_trip(tmp_path):
    cfg, snaps, steps = recorded_episode()
    path = tmp_path / "ep.replay"
    written = export_replay(snaps, cfg, path)
    back = read_replay(path)
    assert back.snapshots == snaps
    assert back.to_bytes() == path.read_bytes() == written.to_bytes()
    assert back.header["dt"] == cfg.sim.dt
    assert back.steps == steps and len(back.snapshots) == steps + 1
    assert back.worlds()[-1] == WorldState.from_bytes(snaps[-1])


def test_replay_rejects_short_and_corrupt_input(tmp_path):
    cfg, snaps, _ = recorded_episode()
    with pytest.raises(ReplayError):
        export_replay(snaps[:1], cfg, tmp_path / "x.replay")
    data = ReplayFile({"n_blue": 1, "n_yellow": 1, "dt": 0.005}, snaps).to_bytes()
    with pytest.raises(ReplayError):
        ReplayFile.from_bytes(b"NOTAREPL" + data[8:])
    with pytest.raises(ReplayError):
        ReplayFile.from_bytes(data[:-1])


def test_failed_write_leaves_no_partial_file(tmp_path, monkeypatch):
    cfg, snaps, _ = recorded_episode()
    target = tmp_path / "ep.replay"

    def boom(self, other):
        raise OSError("disk full")

    monkeypatch.setattr(Path, "replace", boom)
    with pytest.raises(OSError):
        export_replay(snaps, cfg, target)
    assert list(tmp_path.iterdir()) == []


# ---------------------------------------------------------------- manifests

def test_manifest_round_trip_and_embedding(tmp_path):
    man = RunManifest.create("eval", {"b": 2, "a": 1}, [7], argv=["vsss-rl", "eval"])
    assert list(man.config) == ["a", "b"]
    back = RunManifest.from_json(man.to_json())
    assert back == man and back.config_hash == man.config_hash
    emb = man.embedded()
    assert set(emb) == {"command", "config_hash", "seeds", "versions"}
    write_json(tmp_path / "out.json", {"x": 1}, man)
    doc = json.loads((tmp_path / "out.json").read_text())
    assert doc["manifest"] == emb and doc["x"] == 1
    assert RunManifest.from_json(write_sidecar(tmp_path, man).read_text()) == man


def test_config_hash_tracks_config():
    a = RunManifest.create("eval", {"env.max_steps": "3000"}, [0], argv=[])
    b = RunManifest.create("eval", {"env.max_steps": "3001"}, [0], argv=[])
    c = RunManifest.create("eval", {"env.max_steps": "3000"}, [0], argv=["other"])
    assert a.config_hash != b.config_hash
    assert a.embedded() == c.embedded()


def test_write_atomic_overwrites(tmp_path):
    p = tmp_path / "f.bin"
    write_atomic(p, b"one")
    write_atomic(p, b"two")
    assert p.read_bytes() == b"two"
    assert sorted(x.name for x in tmp_path.iterdir()) == ["f.bin"]


def test_replay_embeds_manifest(tmp_path):
    cfg, snaps, _ = recorded_episode()
    man = RunManifest.create("replay", {"k": 1}, [4], argv=[])
    export_replay(snaps, cfg, tmp_path / "ep.replay", man)
    assert read_replay(tmp_path / "ep.replay").header["manifest"] == man.embedded()
    assert np.isfinite(read_replay(tmp_path / "ep.replay").header["dt"])

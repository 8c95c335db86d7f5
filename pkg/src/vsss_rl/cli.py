"""Command-line entry point: ``vsss-rl {train,eval,match,serve,adapt,replay}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flag, missing or
invalid config).  Every run writes ``manifest.json`` into ``--out`` and
stamps the reproducible part of that manifest into each artifact.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .agents.common import (ActorPolicy, GreedyQPolicy, RandomPolicy, evaluate,
                            policy_checkpoint_bytes, policy_from_checkpoint)
from .agents.ddpg import DdpgConfig, train_ddpg
from .agents.dqn import DqnConfig, train_dqn
from .config import ConfigError, build, check_prefixes, flatten, load_kv, section
from .env import EnvConfig, SoccerEnv, env_config_from_kv, env_config_to_kv
from .harness.manifest import RunManifest, write_atomic, write_json, write_sidecar
from .harness.match import PolicyPlayer, ScriptedPlayer, StationaryPlayer, run_match
from .harness.replay import export_replay, read_replay
from .harness.stats import steps_to_goal_stats
from .physics import BLUE
from .seeding import child_seed, substream
from .sim2real import SurrogateParams, SurrogatePlant, canonical_plant

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class EvalSettings:
    episodes: int = 100
    max_steps: int = 3000


@dataclass(frozen=True)
class NetSettings:
    host: str = "127.0.0.1"
    port: int = 7777
    idle_timeout: float = 60.0
    max_sessions: int = 64


@dataclass(frozen=True)
class AdaptSettings:
    samples: int = 10_000
    epochs: int = 60
    batch_size: int = 128
    lr: float = 1e-3
    val_fraction: float = 0.2
    tracking_points: int = 7


@dataclass
class Settings:
    env: EnvConfig
    dqn: DqnConfig
    ddpg: DdpgConfig
    eval: EvalSettings
    net: NetSettings
    plant: SurrogateParams
    adapt: AdaptSettings

    def flat(self) -> dict:
        out = env_config_to_kv(self.env)
        for prefix, obj in (("dqn", self.dqn), ("ddpg", self.ddpg), ("eval", self.eval),
                            ("net", self.net), ("plant", self.plant), ("adapter", self.adapt)):
            out.update(flatten(obj, prefix))
        return out


def load_settings(path: Optional[str]) -> Settings:
    mapping: dict = {}
    if path is not None:
        if not Path(path).is_file():
            raise UsageError(f"config file not found: {path}")
        mapping = load_kv(path)
    check_prefixes(mapping)
    env = env_config_from_kv(mapping)
    plant_defaults = {k: v for k, v in flatten(canonical_plant(env.sim), "plant").items()}
    plant_map = {**{k: str(v) for k, v in plant_defaults.items()}, **section_keys(mapping, "plant")}
    return Settings(
        env=env,
        dqn=build(DqnConfig, mapping, "dqn"),
        ddpg=build(DdpgConfig, mapping, "ddpg"),
        eval=build(EvalSettings, mapping, "eval"),
        net=build(NetSettings, mapping, "net"),
        plant=build(SurrogateParams, plant_map, "plant", base=env.sim),
        adapt=build(AdaptSettings, mapping, "adapter"),
    )


def section_keys(mapping: dict, prefix: str) -> dict:
    return {f"{prefix}.{k}": v for k, v in section(mapping, prefix).items()}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ------------------------------------------------------------------ policies

def load_policy(spec: str, env_cfg: EnvConfig, seed: int, stream: str):
    """``random`` or a checkpoint path -> observation policy."""
    if spec == "random":
        return RandomPolicy(9, child_seed(seed, stream))
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"checkpoint not found: {spec}")
    return policy_from_checkpoint(path)


def load_player(spec: str, env_cfg: EnvConfig, seed: int, stream: str):
    if spec == "scripted":
        return ScriptedPlayer()
    if spec == "stationary":
        return StationaryPlayer()
    return PolicyPlayer(load_policy(spec, env_cfg, seed, stream), name=Path(spec).stem)


# ------------------------------------------------------------------ commands

def cmd_train(args, st: Settings, out: Path, manifest: RunManifest) -> int:
    from .harness.plots import plot_learning_curves

    env_cfg = st.env
    if args.algo == "ddpg":
        env_cfg = replace(env_cfg, action_mode="continuous")
    eval_cfg = replace(env_cfg, max_steps=st.eval.max_steps)
    meta = {"manifest": manifest.embedded()}
    kwargs = dict(seed=args.seed, out_dir=out / "checkpoints",
                  eval_env_factory=lambda: SoccerEnv(eval_cfg),
                  log=None if args.quiet else _log, extra_meta=meta)
    if args.algo == "dqn":
        cfg = st.dqn if args.steps is None else replace(st.dqn, max_env_steps=args.steps)
        result = train_dqn(lambda: SoccerEnv(env_cfg), cfg, **kwargs)
    else:
        cfg = st.ddpg if args.steps is None else replace(st.ddpg, max_env_steps=args.steps)
        result = train_ddpg(lambda: SoccerEnv(env_cfg), cfg, **kwargs)

    write_atomic(out / "final.ckpt", policy_checkpoint_bytes(result.policy, meta))
    write_atomic(out / "best.ckpt", policy_checkpoint_bytes(result.best_policy, meta))
    write_atomic(out / "curve.csv", result.curve.to_csv(manifest.header_lines()).encode("utf-8"))
    plot_learning_curves({args.algo: result.curve}, out / "curve.png", manifest)
    last = result.curve.points[-1]
    write_json(out / "train.json", {"algo": args.algo, "env_steps": result.env_steps,
                                    "final_eval_return": last.eval_return,
                                    "final_success_rate": last.success_rate,
                                    "buffer_size": result.buffer_size}, manifest)
    print(f"trained {args.algo} for {result.env_steps} steps; "
          f"final eval return {last.eval_return:.3f}, success {last.success_rate:.2f}")
    return EXIT_OK


def _episode_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in substream(seed, "eval").integers(0, 2**31 - 1, size=n)]


def cmd_eval(args, st: Settings, out: Path, manifest: RunManifest) -> int:
    policy = load_policy(args.policy, st.env, args.seed, "policy_a")
    if isinstance(policy, ActorPolicy):
        env_cfg = replace(st.env, action_mode="continuous", max_steps=st.eval.max_steps)
    else:
        env_cfg = replace(st.env, max_steps=st.eval.max_steps)
    n = args.episodes or st.eval.episodes
    controller = None
    plant = None
    if args.adapter:
        from .sim2real.adapter import LearnedAdapter

        controller = LearnedAdapter.load(args.adapter)
    if args.surrogate:
        plant = SurrogatePlant(st.plant)
    env = SoccerEnv(env_cfg, controller=controller, plant=plant)
    result = evaluate(env, policy, _episode_seeds(args.seed, n))
    stats = steps_to_goal_stats(result.episodes)
    write_json(out / "eval.json", {"policy": args.policy, "episodes": n,
                                   "success_rate": result.success_rate,
                                   "mean_return": result.mean_return,
                                   "steps_to_goal": stats.as_dict(),
                                   "surrogate": bool(args.surrogate),
                                   "adapter": bool(args.adapter)}, manifest)
    buf = io.StringIO()
    for line in manifest.header_lines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "steps", "return", "done_reason"])
    for e in result.episodes:
        w.writerow([e.seed, e.steps, repr(float(e.total_return)), e.done_reason])
    write_atomic(out / "episodes.csv", buf.getvalue().encode("utf-8"))
    print(f"success rate {result.success_rate:.3f}; steps to goal {stats.format()}")
    return EXIT_OK


def cmd_match(args, st: Settings, out: Path, manifest: RunManifest) -> int:
    from .harness.plots import plot_match

    a = load_player(args.a, st.env, args.seed, "policy_a")
    b = load_player(args.b, st.env, args.seed, "policy_b")
    n = args.episodes or st.eval.episodes
    stats = run_match(a, b, st.env, n, args.seed)
    payload = {"a": args.a, "b": args.b, **stats.as_dict()}
    write_json(out / "match.json", payload, manifest)
    plot_match(stats, out / "match.png", labels=(a.name, b.name), manifest=manifest)
    print(f"{a.name} {stats.goals_a} - {stats.goals_b} {b.name} "
          f"({stats.timeouts} timeouts); A steps to goal {stats.steps_a.format()}")
    return EXIT_OK


def cmd_serve(args, st: Settings, out: Path, manifest: RunManifest) -> int:
    from .protocol.server import ServerLimits, serve

    host = args.host or os.environ.get("VSSS_RL_HOST") or st.net.host
    port = args.port if args.port is not None else int(os.environ.get("VSSS_RL_PORT", st.net.port))
    limits = ServerLimits(idle_timeout=st.net.idle_timeout, max_sessions=st.net.max_sessions)
    handle = serve(host=host, port=port, limits=limits)
    h, p = handle.address
    print(f"listening on {h}:{p}", flush=True)
    try:
        deadline = None if args.max_seconds is None else time.monotonic() + args.max_seconds
        while deadline is None or time.monotonic() < deadline:
            time.sleep(0.1)
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
    return EXIT_OK


def cmd_adapt(args, st: Settings, out: Path, manifest: RunManifest) -> int:
    from .harness.plots import plot_tracking
    from .harness.transfer import transfer_policy_eval
    from .sim2real.adapter import (AdapterTrainConfig, LearnedAdapter, collect_adapter_dataset,
                                   dataset_to_csv, envelope_coverage, evaluate_tracking,
                                   naive_controller, tracking_grid, train_adapter)

    ad = st.adapt
    samples = args.samples or ad.samples
    env = st.env
    dataset = collect_adapter_dataset(st.plant, samples, seed=args.seed)
    write_atomic(out / "dataset.csv", dataset_to_csv(dataset, manifest.header_lines()).encode("utf-8"))
    tcfg = AdapterTrainConfig(epochs=args.epochs or ad.epochs, batch_size=ad.batch_size, lr=ad.lr,
                              val_fraction=ad.val_fraction, seed=args.seed)
    trained = train_adapter(dataset, env.sim, tcfg)
    adapter = LearnedAdapter(trained.params, env.sim)
    write_atomic(out / "adapter.bin", adapter.to_bytes({"manifest": manifest.embedded()}))

    grid = tracking_grid(env.v_max, env.omega_max, ad.tracking_points)
    naive = evaluate_tracking(naive_controller(env.sim), st.plant, grid, seed=args.seed,
                              v_norm=env.v_max, omega_norm=env.omega_max)
    learned = evaluate_tracking(adapter, st.plant, grid, seed=args.seed,
                                v_norm=env.v_max, omega_norm=env.omega_max)
    reduction = 1.0 - learned.combined / naive.combined
    payload = {"naive": json.loads(naive.to_json()), "adapter": json.loads(learned.to_json()),
               "combined_reduction": reduction, "val_rmse": trained.val_rmse,
               "coverage": envelope_coverage(dataset, env.v_max, env.omega_max)}
    write_json(out / "tracking.json", payload, manifest)
    plot_tracking({"naive inverse": naive, "adapter": learned}, out / "tracking.png", manifest)
    print(f"combined tracking RMSE {naive.combined:.4f} -> {learned.combined:.4f} "
          f"({100 * reduction:.1f}% reduction)")

    if args.policy:
        policy = load_policy(args.policy, env, args.seed, "policy_a")
        n = args.episodes or st.eval.episodes
        cfg = replace(env, max_steps=st.eval.max_steps,
                      action_mode="continuous" if isinstance(policy, ActorPolicy) else env.action_mode)
        res = transfer_policy_eval(policy, adapter, st.plant, cfg, _episode_seeds(args.seed, n))
        write_json(out / "transfer.json", res.as_dict(), manifest)
        print(f"surrogate steps to goal: adapter off {res.off_stats.format()}, "
              f"adapter on {res.on_stats.format()}")
    return EXIT_OK


def cmd_replay(args, st: Settings, out: Path, manifest: RunManifest) -> int:
    if args.read:
        replay = read_replay(args.read)
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["index", "step", "ball_x", "ball_y", "robot", "x", "y", "theta"])
        for i, world in enumerate(replay.worlds()):
            for j, r in enumerate(world.robots):
                w.writerow([i, world.step, world.ball.x, world.ball.y, j, r.x, r.y, r.theta])
        return EXIT_OK
    player = load_player(args.policy, st.env, args.seed, "policy_a")
    cfg = replace(st.env, max_steps=st.eval.max_steps)
    env = SoccerEnv(cfg, record=True)
    rng = substream(args.seed, "policy_a")
    env.reset(child_seed(args.seed, "env"))
    res = None
    while not env.done:
        res = env.step(player.act(env.world, BLUE, cfg, rng))
    export_replay(env.snapshots, cfg, out / "episode.replay", manifest,
                  done_reason=res.done_reason)
    print(f"recorded {env.steps} steps ({res.done_reason}) to {out / 'episode.replay'}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "match": cmd_match, "serve": cmd_serve,
            "adapt": cmd_adapt, "replay": cmd_replay}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out", help="output directory (default runs/<command>)")
    common.add_argument("--seed", type=int, default=0, help="root seed")

    p = argparse.ArgumentParser(prog="vsss-rl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a DQN or DDPG agent")
    t.add_argument("--algo", choices=("dqn", "ddpg"), default="dqn")
    t.add_argument("--steps", type=int, help="override max environment steps")
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("eval", parents=[common], help="steps-to-goal of a checkpoint")
    e.add_argument("--policy", required=True, help="checkpoint path or 'random'")
    e.add_argument("--episodes", type=int)
    e.add_argument("--surrogate", action="store_true", help="run on the perturbed surrogate plant")
    e.add_argument("--adapter", help="learned adapter file used as low-level controller")

    m = sub.add_parser("match", parents=[common], help="mirrored 1-vs-1 match")
    m.add_argument("--a", required=True, help="checkpoint, 'scripted', 'stationary' or 'random'")
    m.add_argument("--b", required=True)
    m.add_argument("--episodes", type=int)

    s = sub.add_parser("serve", parents=[common], help="run the environment server")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--max-seconds", type=float, help="stop after this long (default: until ^C)")

    a = sub.add_parser("adapt", parents=[common], help="collect data, train and score the adapter")
    a.add_argument("--samples", type=int)
    a.add_argument("--epochs", type=int)
    a.add_argument("--policy", help="also compare adapter on/off for this checkpoint")
    a.add_argument("--episodes", type=int)

    r = sub.add_parser("replay", parents=[common], help="record or print a replay file")
    r.add_argument("--policy", default="scripted", help="player for the recorded episode")
    r.add_argument("--read", help="print an existing replay as CSV instead of recording")
    return p


def _cli_keys(args) -> dict:
    skip = {"config", "out", "command", "quiet", "read"}
    return {f"cli.{k}": v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        st = load_settings(args.config)
    except (UsageError, ConfigError) as exc:
        print(f"vsss-rl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out or Path("runs") / args.command)
    manifest = RunManifest.create(args.command, {**st.flat(), **_cli_keys(args)}, [args.seed],
                                  ["vsss-rl", *argv])
    read_only = args.command == "replay" and args.read
    if not read_only:
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_sidecar(out, manifest)
        except OSError as exc:
            print(f"vsss-rl: error: cannot write to {out}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    try:
        return COMMANDS[args.command](args, st, out, manifest)
    except UsageError as exc:
        print(f"vsss-rl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"vsss-rl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ConfigError) else EXIT_RUNTIME
    except (OSError, RuntimeError) as exc:
        print(f"vsss-rl: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

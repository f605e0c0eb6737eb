"""quadlab command-line runner.

Exit codes: 0 success, 2 configuration or input error, 3 simulation divergence.
Every command writes ``manifest.json`` (config hash, seeds, version) to its
output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .episode import LogFormatError
from .experiments import (
    aggregate_reports, ensure_dir, episode_seed, evaluate_episodes, extended_gait_points, fit_extended,
    make_controller, make_env, make_trainer, observation_cases, observation_sweep_row, quadruped_eval,
    reward_cases, reward_sweep_row, toy_eval, updates_for,
)
from .learn.train import CheckpointError, Trainer, load_policy, train
from .metrics import compute_report
from .world import SimulationDiverged

log = logging.getLogger("quadlab")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


class UsageError(ValueError):
    pass


def _config(args) -> ExperimentConfig:
    if args.config is None:
        return parse_config({})
    return load_config(args.config)


def _seeds(args, cfg: ExperimentConfig) -> list[int]:
    return [args.seed] if args.seed is not None else list(cfg.seeds)


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig, seeds, args, extra=None):
    manifest = {
        "tool": "quadlab", "version": __version__, "command": command,
        "config_hash": cfg.config_hash(), "config": json.loads(cfg.canonical_json()),
        "seeds": list(seeds), "parallel": args.parallel, "budget": args.budget,
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def _write_csv(path: Path, rows: list[dict]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})


def _pmap(fn, items, parallel: int):
    """Ordered map; results do not depend on the worker count."""
    if parallel <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(fn, *zip(*items)))


# commands ----------------------------------------------------------------------------

def _run_one(cfg_json: str, seed: int):
    cfg = parse_config(json.loads(cfg_json))
    sc = cfg.build_scenario()
    c = cfg.controller
    return evaluate_episodes(lambda: make_controller(c.kind, sc, c.mu, c.omega, c.v_des, c.checkpoint), sc, [seed])[0]


def cmd_run(args) -> int:
    cfg = _config(args)
    sc = cfg.build_scenario()
    c = cfg.controller
    try:
        make_controller(c.kind, sc, c.mu, c.omega, c.v_des, c.checkpoint)
    except (ValueError, CheckpointError) as exc:
        raise ConfigError(f"controller: {exc}") from None
    out = ensure_dir(args.out)
    seeds = [episode_seed(s, k) for s in _seeds(args, cfg) for k in range(cfg.evaluation.episodes)]
    logs = _pmap(_run_one, [(cfg.canonical_json(), s) for s in seeds], args.parallel)
    for s, lg in zip(seeds, logs):
        lg.to_csv(out / f"episode_{s:06d}.csv")
    report = aggregate_reports(logs)
    report["episode_seeds"] = seeds
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    _write_manifest(out, "run", cfg, seeds, args)
    print(f"wrote {len(logs)} episode logs and report.json to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    t = cfg.training
    ppo = t.ppo.build()
    samples = args.budget if args.budget is not None else t.samples
    updates = updates_for(samples, ppo)
    seed = _seeds(args, cfg)[0]
    sc = cfg.build_scenario() if t.env == "quadruped" else None
    out = ensure_dir(args.out)
    meta = {"env_kind": t.env, "config_hash": cfg.config_hash()}
    if sc is not None:
        meta.update(action_spec=sc.action.to_dict(), observation=sc.observation.to_dict(),
                    scenario=cfg.scenario.model_dump(mode="json"))
    if args.resume:
        env = make_env(sc, ppo, seed, t.env)
        trainer = Trainer.load(args.resume, env)
        if trainer.meta.get("config_hash") != cfg.config_hash():
            raise ConfigError("resume checkpoint was produced with a different config")
    else:
        trainer = make_trainer(sc, ppo, seed, t.env, meta)
    eval_fn = toy_eval if t.env == "toy" else quadruped_eval(sc, t.eval_episodes, seed, max(t.checkpoint_every, 1))

    def progress(row):
        log.info("update %d samples %d return %.4g", row["update"], row["samples"], row["mean_return"])

    train(trainer.env, ppo, seed, updates, eval_fn=eval_fn, checkpoint_dir=out / "checkpoints",
          checkpoint_every=t.checkpoint_every, trainer=trainer, progress=progress)
    trainer.save(out / "final.npz")
    _write_csv(out / "curve.csv", trainer.curve)
    _write_manifest(out, "train", cfg, [seed], args, {"updates": trainer.updates, "samples": trainer.samples,
                                                      "resumed_from": args.resume})
    print(f"trained {trainer.updates} updates ({trainer.samples} samples); outputs in {out}")
    return EXIT_OK


def _sweep_setup(args, kind: str):
    cfg = _config(args)
    sc = cfg.build_scenario()
    if sc.terrain != "gaps":
        raise ConfigError(f"scenario.terrain.kind: {kind} sweeps need a gaps scenario")
    samples = args.budget if args.budget is not None else cfg.sweep.samples
    return cfg, sc, cfg.training.ppo.build(), samples


def cmd_sweep_rewards(args) -> int:
    cfg, sc, ppo, samples = _sweep_setup(args, "reward")
    if sc.action.scenario != "gap":
        raise ConfigError("scenario.action.scenario: reward sweeps need the gap action space")
    seed = _seeds(args, cfg)[0]
    cases = reward_cases(cfg.sweep.cases)
    rows = _pmap(reward_sweep_row, [(sc, c, ppo, seed, samples, cfg.sweep.eval_episodes) for c in cases],
                 args.parallel)
    out = ensure_dir(args.out)
    _write_csv(out / "reward_sweep.csv", rows)
    _write_manifest(out, "sweep-rewards", cfg, [seed], args, {"samples_per_cell": samples})
    print(f"wrote {len(rows)} rows to {out / 'reward_sweep.csv'}")
    return EXIT_OK


def cmd_sweep_observations(args) -> int:
    cfg, sc, ppo, samples = _sweep_setup(args, "observation")
    seed = _seeds(args, cfg)[0]
    names = observation_cases(cfg.sweep.cases)
    rows = _pmap(observation_sweep_row, [(sc, n, ppo, seed, samples, cfg.sweep.eval_episodes) for n in names],
                 args.parallel)
    out = ensure_dir(args.out)
    _write_csv(out / "observation_sweep.csv", rows)
    _write_manifest(out, "sweep-observations", cfg, [seed], args, {"samples_per_cell": samples})
    print(f"wrote {len(rows)} rows to {out / 'observation_sweep.csv'}")
    return EXIT_OK


def cmd_extended_gait(args) -> int:
    cfg = _config(args)
    sc = cfg.build_scenario()
    path = args.checkpoint or cfg.controller.checkpoint
    if not path:
        raise ConfigError("extended-gait needs --checkpoint or controller.checkpoint")
    ac, _ = load_policy(path)
    if ac.obs_dim != sc.observation.dim or ac.act_dim != sc.action.dim:
        raise ConfigError("checkpoint dimensions do not match the scenario")
    scales = args.scales if args.scales else cfg.extended_gait.scales
    seeds = [episode_seed(s, k) for s in _seeds(args, cfg) for k in range(cfg.extended_gait.episodes)]
    rows = extended_gait_points(ac, sc, scales, seeds)
    out = ensure_dir(args.out)
    _write_csv(out / "extended_gait.csv", rows)
    fit = fit_extended(rows)
    (out / "fit.json").write_text(json.dumps({"coefficients": fit, "order": "c0 + c1 v + c2 v^2"}, indent=2),
                                  encoding="utf-8")
    _write_manifest(out, "extended-gait", cfg, seeds, args, {"checkpoint": str(path)})
    print(f"wrote {len(rows)} points to {out / 'extended_gait.csv'}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .episode import EpisodeLog

    lg = EpisodeLog.from_csv(args.log)
    report = compute_report(lg)
    text = report.to_json()
    if args.out:
        out = ensure_dir(args.out)
        (out / "report.json").write_text(text, encoding="utf-8")
        cfg = parse_config({})
        _write_manifest(out, "replay", cfg, [lg.meta.get("seed")] if "seed" in lg.meta else [], args,
                        {"log": str(args.log)})
    else:
        print(text)
    return EXIT_OK


# entry point ----------------------------------------------------------------------------

def _budget(text: str) -> int:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid sample budget '{text}'") from None
    if not math.isfinite(val) or val <= 0:
        raise argparse.ArgumentTypeError("budget must be a positive number of samples")
    return int(val)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"quadlab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seeds with a single seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--parallel", type=int, default=1, help="worker processes")
    common.add_argument("--budget", type=_budget,
                        help="total training samples, counting resumed ones (per cell for sweeps)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="evaluate a controller and write logs + report").set_defaults(
        fn=cmd_run)
    tr = sub.add_parser("train", parents=[common], help="train a PPO policy")
    tr.add_argument("--resume", help="checkpoint to continue from")
    tr.set_defaults(fn=cmd_train)
    sub.add_parser("sweep-rewards", parents=[common], help="train/evaluate the 27 reward-weight cells").set_defaults(
        fn=cmd_sweep_rewards)
    sub.add_parser("sweep-observations", parents=[common],
                   help="train/evaluate the 13 observation cases").set_defaults(fn=cmd_sweep_observations)
    ex = sub.add_parser("extended-gait", parents=[common], help="replay a policy with L_step overrides")
    ex.add_argument("--checkpoint")
    ex.add_argument("--scales", type=float, nargs="+")
    ex.set_defaults(fn=cmd_extended_gait)
    rp = sub.add_parser("replay", parents=[common], help="recompute metrics from a log CSV")
    rp.add_argument("log")
    rp.set_defaults(fn=cmd_replay, out=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.parallel < 1:
        print("error: --parallel must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LogFormatError as exc:
        where = f" (line {exc.line})" if exc.line is not None else ""
        print(f"log error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())

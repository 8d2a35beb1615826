"""Command-line entry point: ``notifrl <command> [options]``.

Exit codes: 0 on success, 2 on invalid input or parameters, 3 when every
training run of a sweep diverged.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, ope
from .errors import DivergenceError, NotifRLError
from .mdp import read_jsonl
from .policies import load_policy
from .sim import SimConfig, rollout_value

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


def _sim_config(args) -> SimConfig:
    return SimConfig.load(args.config) if args.config else SimConfig()


def _dataset_paths(dataset) -> tuple[Path, Path]:
    """A dataset is a directory holding ``train.jsonl`` and ``valid.jsonl``."""
    root = Path(dataset)
    return root / "train.jsonl", root / "valid.jsonl"


def _validation_batch(dataset):
    path = Path(dataset)
    return read_jsonl(path if path.is_file() else _dataset_paths(path)[1])


def cmd_collect(args) -> int:
    info = harness.collect(args.out, _sim_config(args), epsilon=args.epsilon, tau=args.tau,
                           n_trajectories=args.n, seed=args.seed,
                           n_eval_episodes=args.episodes)
    _print_json(info)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sweep = harness.SweepConfig.load(args.config) if args.config else harness.SweepConfig()
    train_path, valid_path = _dataset_paths(args.dataset)
    sweep.train_path, sweep.valid_path = str(train_path), str(valid_path)
    if args.seed is not None:
        sweep.master_seed = args.seed
    if args.bins is not None:
        sweep.bins = args.bins
    if args.workers is not None:
        sweep.workers = args.workers
    if args.episodes is not None:
        sweep.n_rollout_episodes = args.episodes
    report = harness.run_sweep(sweep, read_jsonl(train_path), read_jsonl(valid_path), args.out)
    _print_json(report["summary"])
    summary = report["summary"]
    if summary["n_policies"] > 0 and summary["n_failed"] == summary["n_policies"]:
        print("error: every training run diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_select(args) -> int:
    _print_json(harness.select(harness.load_report(args.report)))
    return EXIT_OK


def cmd_report(args) -> int:
    report = harness.load_report(args.report)
    out = args.out or (Path(args.report) if Path(args.report).is_dir() else Path(args.report).parent)
    for path in harness.write_error_csvs(report, out, figures=not args.no_figures):
        print(path)
    return EXIT_OK


def _target_policy(args, config: SimConfig):
    if args.policy:
        return load_policy(args.policy)
    return harness.behavior_policy(args.epsilon, args.tau, config)


def cmd_eval_online(args) -> int:
    config = _sim_config(args)
    policy = _target_policy(args, config)
    mean, se = rollout_value(policy, config, args.episodes, args.seed, gamma=1.0)
    _print_json({"online_mean": mean, "online_se": se, "episodes": args.episodes})
    return EXIT_OK


def cmd_eval_offline(args) -> int:
    batch = _validation_batch(args.dataset)
    policy = load_policy(args.policy) if args.policy else harness.behavior_of(batch)
    est = ope.estimate(args.method, batch, policy, not args.no_self_normalize, args.bins)
    _print_json(est.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="notifrl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="log behavior-policy training and validation data")
    p.add_argument("--config", help="simulator config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--n", type=int, default=5000, help="total trajectories, split evenly")
    p.add_argument("--episodes", type=int, default=2000, help="rollouts for the behavior value")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("sweep", help="train and evaluate one policy per grid point")
    p.add_argument("--config", help="sweep config JSON")
    p.add_argument("--dataset", required=True, help="directory written by collect")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--bins", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--episodes", type=int, help="rollouts per policy")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("select", help="best policy under each offline estimator")
    p.add_argument("report", help="report.json or the sweep output directory")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("report", help="write per-method error CSVs and figures")
    p.add_argument("report", help="report.json or the sweep output directory")
    p.add_argument("--out", help="output directory (default: next to the report)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval-online", help="Monte-Carlo value of a policy in the simulator")
    p.add_argument("--policy", help="policy JSON; default is the epsilon-greedy baseline")
    p.add_argument("--config", help="simulator config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--tau", type=float, default=0.3)
    p.set_defaults(func=cmd_eval_online)

    p = sub.add_parser("eval-offline", help="off-policy estimate on a validation batch")
    p.add_argument("--policy", help="policy JSON; default is the logging policy")
    p.add_argument("--dataset", required=True, help="JSONL file or directory written by collect")
    p.add_argument("--method", choices=[m.value for m in ope.Method], default="statemarg")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--no-self-normalize", action="store_true")
    p.set_defaults(func=cmd_eval_offline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (NotifRLError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

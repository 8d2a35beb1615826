"""Experiment orchestration: data collection, hyperparameter sweeps, reports.

Every trained policy gets a seed derived only from ``(master_seed, grid
index)``, and all policies are evaluated online on the same episode seeds, so
results do not depend on worker scheduling.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ope
from .errors import DivergenceError, InvalidInputError, InvalidParameterError
from .mdp import TrajectoryBatch, read_jsonl
from .policies import (
    BaselinePolicy,
    EpsilonGreedyPolicy,
    GreedyQPolicy,
    collect_batch,
    policy_from_json,
    save_batch,
)
from .qlearn import TrainConfig, train_offline
from .sim import SimConfig, rollout_value

log = logging.getLogger(__name__)

GRID_FIELDS = ("learning_rate", "batch_size", "target_update_period", "hidden_width", "algorithm")
METHOD_COLUMNS = {
    "onestep": "ope_onestep",
    "trajectory": "ope_traj",
    "statemarg": "ope_statemarg",
}
ROW_COLUMNS = (
    ["policy_id", *GRID_FIELDS, "n_updates", "gamma", "seed", "status", "final_loss",
     "online_mean", "online_se"]
    + list(METHOD_COLUMNS.values())
)


def derive_seed(master_seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([master_seed, *keys]).generate_state(1)[0])


def behavior_policy(epsilon: float, tau: float, config: SimConfig) -> EpsilonGreedyPolicy:
    return EpsilonGreedyPolicy(BaselinePolicy.for_config(tau, config), epsilon)


# -- collect ---------------------------------------------------------------

def collect(out_dir, config: SimConfig, epsilon: float = 0.2, tau: float = 0.3,
            n_trajectories: int = 5000, seed: int = 0, n_eval_episodes: int = 2000) -> dict:
    """Write ``train.jsonl`` and ``valid.jsonl`` (plus sidecars) under ``out_dir``.

    ``n_trajectories`` is the total, split evenly; the training half gets
    episode seeds ``seed, seed+1, ...`` and the validation half continues
    from there so the two never share an episode.
    """
    if n_trajectories < 2:
        raise InvalidParameterError("need at least 2 trajectories (train and validation)")
    policy = behavior_policy(epsilon, tau, config)
    n_train = (n_trajectories + 1) // 2
    n_valid = n_trajectories - n_train
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, count, start in (("train", n_train, seed), ("valid", n_valid, seed + n_train)):
        batch = collect_batch(policy, config, count, start, metadata={"split": name})
        paths[name] = out / f"{name}.jsonl"
        save_batch(batch, paths[name])
    mean, se = rollout_value(policy, config, n_eval_episodes, derive_seed(seed, 1), gamma=1.0)
    return {"train": str(paths["train"]), "valid": str(paths["valid"]),
            "behavior_online_mean": mean, "behavior_online_se": se}


# -- sweep -----------------------------------------------------------------

@dataclass
class SweepConfig:
    grid: dict = field(default_factory=lambda: {
        "learning_rate": [0.003, 0.03],
        "batch_size": [32, 128],
        "target_update_period": [20, 500],
        "hidden_width": [8, 32],
        "algorithm": ["DoubleDQN", "DQN"],
    })
    n_updates: int = 3000
    gamma: float = 0.95
    n_policies: int | None = None
    train_path: str | None = None
    valid_path: str | None = None
    n_rollout_episodes: int = 1000
    methods: tuple = ("onestep", "trajectory", "statemarg")
    bins: int = 10
    self_normalize: bool = True
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        missing = set(GRID_FIELDS) - set(self.grid)
        if missing:
            raise InvalidParameterError(f"grid is missing {sorted(missing)}")
        if any(len(self.grid[k]) == 0 for k in GRID_FIELDS):
            raise InvalidParameterError("every grid axis needs at least one value")
        for m in self.methods:
            ope.Method(m)
        self.methods = tuple(self.methods)

    def grid_points(self) -> list[dict]:
        points = [dict(zip(GRID_FIELDS, values))
                  for values in itertools.product(*(self.grid[k] for k in GRID_FIELDS))]
        if self.n_policies is not None:
            points = points[: self.n_policies]
        return points

    def train_config(self, index: int, point: dict) -> TrainConfig:
        return TrainConfig(gamma=self.gamma, n_updates=self.n_updates,
                           seed=derive_seed(self.master_seed, index), **point)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        obj = json.loads(Path(path).read_text())
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidParameterError(f"unknown sweep config fields: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out


def sim_config_of(batch: TrajectoryBatch) -> SimConfig:
    cfg = batch.metadata.get("config")
    return SimConfig.from_json(cfg) if cfg else SimConfig()


def behavior_of(batch: TrajectoryBatch):
    desc = batch.metadata.get("policy")
    if desc is None:
        raise InvalidInputError("dataset metadata does not describe the behavior policy")
    return policy_from_json(desc)


def evaluate_offline(policy, batch: TrajectoryBatch, methods, bins=10, self_normalize=True) -> dict:
    estimates = ope.estimate_all(methods, batch, policy, self_normalize, bins)
    return {m: est.value for m, est in estimates.items()}


def _train_and_evaluate(index, point, sweep: SweepConfig, train: TrajectoryBatch,
                        valid: TrajectoryBatch, sim: SimConfig, eval_seed: int, policy_dir):
    cfg = sweep.train_config(index, point)
    row = {"policy_id": index, **point, "n_updates": cfg.n_updates, "gamma": cfg.gamma,
           "seed": cfg.seed}
    try:
        report = train_offline(train, cfg)
    except DivergenceError as exc:
        log.warning("policy %d diverged: %s", index, exc)
        row.update(status="diverged", final_loss=float("nan"), online_mean=float("nan"),
                   online_se=float("nan"))
        row.update({METHOD_COLUMNS[m]: float("nan") for m in sweep.methods})
        return row
    network = report.final_network
    if policy_dir is not None:
        network.save(Path(policy_dir) / f"policy_{index:03d}.json")
    policy = GreedyQPolicy(network)
    mean, se = rollout_value(policy, sim, sweep.n_rollout_episodes, eval_seed, gamma=1.0)
    offline = evaluate_offline(policy, valid, sweep.methods, sweep.bins, sweep.self_normalize)
    tail = [loss for _, loss in report.loss_curve[-max(1, len(report.loss_curve) // 10):]]
    row.update(status="ok", final_loss=float(np.mean(tail)) if tail else float("nan"),
               online_mean=mean, online_se=se)
    row.update({METHOD_COLUMNS[m]: v for m, v in offline.items()})
    return row


_WORKER_DATA = {}


def _worker_init(train_path, valid_path):
    _WORKER_DATA["train"] = read_jsonl(train_path)
    _WORKER_DATA["valid"] = read_jsonl(valid_path)


def _worker_task(args):
    index, point, sweep, sim, eval_seed, policy_dir = args
    return _train_and_evaluate(index, point, sweep, _WORKER_DATA["train"], _WORKER_DATA["valid"],
                               sim, eval_seed, policy_dir)


def run_sweep(sweep: SweepConfig, train: TrajectoryBatch, valid: TrajectoryBatch,
              out_dir=None) -> dict:
    """Train one policy per grid point and evaluate it online and offline.

    Offline estimates always use ``valid``.  Returns the study report as a
    dict (see :func:`summarize`); also writes ``report.json``,
    ``report.csv`` and ``policies/`` when ``out_dir`` is given.
    """
    sim = sim_config_of(valid)
    behavior = behavior_of(valid)
    eval_seed = derive_seed(sweep.master_seed, 10**6)
    policy_dir = None
    if out_dir is not None:
        policy_dir = Path(out_dir) / "policies"
        policy_dir.mkdir(parents=True, exist_ok=True)
    points = sweep.grid_points()
    if sweep.workers > 1 and sweep.train_path and sweep.valid_path:
        tasks = [(i, p, sweep, sim, eval_seed, policy_dir) for i, p in enumerate(points)]
        with ProcessPoolExecutor(sweep.workers, initializer=_worker_init,
                                 initargs=(sweep.train_path, sweep.valid_path)) as pool:
            rows = list(pool.map(_worker_task, tasks))
    else:
        rows = [_train_and_evaluate(i, p, sweep, train, valid, sim, eval_seed, policy_dir)
                for i, p in enumerate(points)]
    rows.sort(key=lambda r: r["policy_id"])
    b_mean, b_se = rollout_value(behavior, sim, sweep.n_rollout_episodes, eval_seed, gamma=1.0)
    report = summarize(rows, {"online_mean": b_mean, "online_se": b_se}, sweep.methods)
    report["settings"] = sweep.to_json()
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def summarize(rows, behavior: dict, methods=tuple(METHOD_COLUMNS)) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {"n_policies": len(rows), "n_failed": len(rows) - len(ok)}
    if ok:
        online = np.array([r["online_mean"] for r in ok])
        summary["fraction_beating_behavior"] = float(np.mean(online > behavior["online_mean"]))
        summary["online_spread"] = float(online.max() - online.min())
        for m in methods:
            err = np.array([r[METHOD_COLUMNS[m]] for r in ok]) - online
            summary[f"bias_{m}"] = float(err.mean())
            summary[f"variance_{m}"] = float(err.var(ddof=1)) if len(err) > 1 else 0.0
    return {"rows": rows, "behavior": behavior, "summary": summary}


def write_report(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2))
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(report["rows"])


def load_report(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    report = json.loads(path.read_text())
    if not report.get("rows"):
        raise InvalidInputError(f"{path}: report has no rows")
    return report


# -- select / report -------------------------------------------------------

def select(report: dict, methods=tuple(METHOD_COLUMNS)) -> dict:
    """Best policy per offline method, its online value and regret."""
    ok = [r for r in report.get("rows", []) if r["status"] == "ok"]
    if not ok:
        raise InvalidInputError("report has no successfully trained policies")
    best_online = max(r["online_mean"] for r in ok)
    out = {}
    for m in methods:
        col = METHOD_COLUMNS[m]
        chosen = max(ok, key=lambda r: (r[col], -r["policy_id"]))
        out[m] = {"policy_id": chosen["policy_id"], "offline": chosen[col],
                  "online_mean": chosen["online_mean"],
                  "regret": best_online - chosen["online_mean"]}
    return out


def error_samples(report: dict, methods=tuple(METHOD_COLUMNS)) -> dict:
    ok = [r for r in report["rows"] if r["status"] == "ok"]
    return {m: [(r["policy_id"], r[METHOD_COLUMNS[m]], r["online_mean"],
                 r[METHOD_COLUMNS[m]] - r["online_mean"]) for r in ok]
            for m in methods if METHOD_COLUMNS[m] in (ok[0] if ok else {})}


def write_error_csvs(report: dict, out_dir, figures: bool = True) -> list[Path]:
    """One CSV of (offline - online) errors per method, plus figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = error_samples(report)
    written = []
    for m, rows in samples.items():
        path = out / f"errors_{m}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["policy_id", "offline", "online", "error"])
            writer.writerows(rows)
        written.append(path)
    if figures and samples:
        from .plotting import error_boxplot, online_value_histogram

        error_boxplot({m: [r[3] for r in rows] for m, rows in samples.items()},
                      out / "errors_boxplot.png")
        online = [r["online_mean"] for r in report["rows"] if r["status"] == "ok"]
        online_value_histogram(online, report["behavior"]["online_mean"],
                               out / "online_values.png")
        written += [out / "errors_boxplot.png", out / "online_values.png"]
    return written


# -- replicated estimator study --------------------------------------------

def replicated_ope_study(targets, truths, behavior, config: SimConfig, n_replications: int,
                         n_trajectories: int, seed: int, bins: int = 10,
                         self_normalize: bool = True,
                         methods=("onestep", "statemarg", "trajectory")) -> np.ndarray:
    """Errors ``estimate - truth`` of each method on fresh behavior batches.

    Returns an array of shape ``(n_replications, len(targets), len(methods))``.
    Replication ``r`` collects its batch from episode seed
    ``derive_seed(seed, r)``.
    """
    truths = np.asarray(truths, float)
    errors = np.zeros((n_replications, len(targets), len(methods)))
    for r in range(n_replications):
        batch = collect_batch(behavior, config, n_trajectories, derive_seed(seed, r) % 2**31)
        for k, target in enumerate(targets):
            estimates = ope.estimate_all(methods, batch, target, self_normalize, bins)
            errors[r, k] = [estimates[m].value for m in methods]
        errors[r] -= truths[:, None]
    return errors


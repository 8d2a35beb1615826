"""Concrete policies and logged-data collection."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, PropensityError
from .mdp import (
    Action,
    N_FEATURES,
    Policy,
    State,
    Trajectory,
    TrajectoryBatch,
    metadata_path,
    write_jsonl,
)
from .qlearn import QNetwork
from .sim import SimConfig, run_episodes, visit_probability


class UniformPolicy(Policy):
    def prob_send(self, state):
        return 0.5

    def prob_send_batch(self, states):
        return np.full(len(np.reshape(states, (-1, N_FEATURES))), 0.5)

    def describe(self):
        return {"kind": "uniform"}


class ConstantPolicy(Policy):
    """Sends with a fixed probability regardless of state."""

    def __init__(self, p_send: float):
        if not 0.0 <= p_send <= 1.0:
            raise InvalidParameterError("p_send must be in [0, 1]")
        self.p_send = float(p_send)

    def prob_send(self, state):
        return self.p_send

    def prob_send_batch(self, states):
        return np.full(len(np.reshape(states, (-1, N_FEATURES))), self.p_send)

    @property
    def is_deterministic(self):
        return self.p_send in (0.0, 1.0)

    def describe(self):
        return {"kind": "constant", "p_send": self.p_send}


class BaselinePolicy(Policy):
    """Threshold rule on the normalized one-step visit uplift of sending.

    Sends the top queued candidate iff the queue is non-empty and
    ``(p_send - p_not) / max(p_not, denom_floor) > tau``, where the two
    probabilities come from the simulator's visit model one step ahead.
    """

    def __init__(self, tau: float, visit_weights=(-2.0, 2.0, 0.8), denom_floor: float = 1e-6):
        if tau < 0:
            raise InvalidParameterError(f"tau must be >= 0, got {tau}")
        self.tau = float(tau)
        self.visit_weights = tuple(float(w) for w in visit_weights)
        self.denom_floor = float(denom_floor)

    @classmethod
    def for_config(cls, tau: float, config: SimConfig) -> "BaselinePolicy":
        return cls(tau, config.visit_weights)

    def uplift(self, badge, activeness):
        p_send = visit_probability(np.add(badge, 1), activeness, self.visit_weights)
        p_not = visit_probability(badge, activeness, self.visit_weights)
        return (p_send - p_not) / np.maximum(p_not, self.denom_floor)

    def prob_send_batch(self, states):
        states = np.asarray(states, float).reshape(-1, N_FEATURES)
        badge, queue, activeness = states[:, 0], states[:, 1], states[:, 3]
        send = (queue > 0) & (self.uplift(badge, activeness) > self.tau)
        return send.astype(float)

    def prob_send(self, state):
        return float(self.prob_send_batch(state.as_array())[0])

    @property
    def is_deterministic(self):
        return True

    def describe(self):
        return {"kind": "baseline", "tau": self.tau, "visit_weights": list(self.visit_weights),
                "denom_floor": self.denom_floor}


def baseline_decide(state: State, tau: float, visit_weights=(-2.0, 2.0, 0.8)) -> Action:
    p = BaselinePolicy(tau, visit_weights).prob_send(state)
    return Action.SEND if p == 1.0 else Action.NOT_SEND


class EpsilonGreedyPolicy(Policy):
    """Follows ``base`` with probability ``1 - epsilon``, otherwise a uniform action."""

    def __init__(self, base: Policy, epsilon: float):
        if not 0.0 <= epsilon <= 1.0:
            raise InvalidParameterError(f"epsilon must be in [0, 1], got {epsilon}")
        self.base = base
        self.epsilon = float(epsilon)

    def _mix(self, p_base):
        eps = self.epsilon
        p_base = np.asarray(p_base, float)
        # Exact branches keep deterministic-base propensities at eps/2 and 1 - eps/2.
        mixed = (1.0 - eps) * p_base + eps / 2.0
        return np.where(p_base == 1.0, 1.0 - eps / 2.0, np.where(p_base == 0.0, eps / 2.0, mixed))

    def prob_send(self, state):
        return float(self._mix(self.base.prob_send(state)))

    def prob_send_batch(self, states):
        return self._mix(self.base.prob_send_batch(states))

    def action_prob(self, state, action):
        return float(self._mix(self.base.action_prob(state, action)))

    def action_prob_batch(self, states, actions):
        return self._mix(self.base.action_prob_batch(states, actions))

    @property
    def is_deterministic(self):
        return self.epsilon == 0.0 and self.base.is_deterministic

    def describe(self):
        return {"kind": "epsilon_greedy", "epsilon": self.epsilon, "base": describe_policy(self.base)}


def epsilon_greedy_prob(policy: EpsilonGreedyPolicy, state: State, action: Action) -> float:
    return policy.action_prob(state, action)


class GreedyQPolicy(Policy):
    """Argmax of a Q-network; NOT_SEND wins exact ties."""

    def __init__(self, network: QNetwork):
        self.network = network

    def prob_send_batch(self, states):
        q = self.network.predict(np.asarray(states, float).reshape(-1, N_FEATURES))
        return (q[:, 1] > q[:, 0]).astype(float)

    def prob_send(self, state):
        return float(self.prob_send_batch(state.as_array())[0])

    @property
    def is_deterministic(self):
        return True

    def describe(self):
        return {"kind": "qnetwork", **self.network.to_json()}


def describe_policy(policy: Policy) -> dict:
    if hasattr(policy, "describe"):
        return policy.describe()
    return {"kind": type(policy).__name__}


def policy_from_json(obj: dict) -> Policy:
    kind = obj.get("kind")
    if kind == "qnetwork":
        return GreedyQPolicy(QNetwork.from_json(obj))
    if kind == "baseline":
        return BaselinePolicy(obj["tau"], obj.get("visit_weights", (-2.0, 2.0, 0.8)),
                              obj.get("denom_floor", 1e-6))
    if kind == "epsilon_greedy":
        return EpsilonGreedyPolicy(policy_from_json(obj["base"]), obj["epsilon"])
    if kind == "uniform":
        return UniformPolicy()
    if kind == "constant":
        return ConstantPolicy(obj["p_send"])
    raise InvalidInputError(f"unknown policy kind {kind!r}")


def load_policy(path) -> Policy:
    return policy_from_json(json.loads(Path(path).read_text()))


def save_policy(policy: Policy, path) -> None:
    Path(path).write_text(json.dumps(describe_policy(policy)))


def collect_batch(policy: Policy, config: SimConfig, n_trajectories: int, seed: int,
                  metadata: dict | None = None) -> TrajectoryBatch:
    """Roll out ``policy`` and log every step with its propensity.

    Episode ``i`` uses seed ``seed + i``.  The policy must give both actions
    positive probability in every visited state.
    """
    if n_trajectories < 1:
        raise InvalidParameterError("n_trajectories must be >= 1")
    if policy.is_deterministic:
        raise PropensityError("logging policy is deterministic; OPE needs full action coverage")
    seeds = list(range(seed, seed + n_trajectories))
    _, logs = run_episodes(policy, config, seeds, record=True)
    for steps in logs:
        for tr in steps:
            if not 0.0 < tr.behavior_prob < 1.0:
                raise PropensityError(
                    f"action coverage violated: propensity {tr.behavior_prob} at {tr.state}"
                )
    meta = {
        "policy": describe_policy(policy),
        "epsilon": getattr(policy, "epsilon", None),
        "tau": getattr(getattr(policy, "base", None), "tau", None),
        "config": config.to_json(),
        "seed": seed,
        "n": n_trajectories,
    }
    meta.update(metadata or {})
    trajectories = tuple(Trajectory(tuple(steps), s) for steps, s in zip(logs, seeds))
    return TrajectoryBatch(trajectories, metadata=meta)


def save_batch(batch: TrajectoryBatch, path) -> None:
    """Write the JSON Lines dataset and its ``.meta.json`` sidecar."""
    write_jsonl(batch, path)
    metadata_path(path).write_text(json.dumps(batch.metadata, indent=2))

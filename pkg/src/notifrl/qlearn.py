"""Fully-connected Q-network and offline (Double) DQN training.

The network is ``4 -> h -> h -> 2`` with ReLU hidden layers.  Inputs are
standardized with statistics of the training batch; the normalizer is frozen
after fitting and saved with the weights.  Training is plain SGD on the mean
squared TD error of uniformly resampled transitions, with a target network
synced every ``target_update_period`` updates.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergenceError, InvalidInputError, InvalidParameterError
from .mdp import N_FEATURES, State, Transition, TrajectoryBatch

ALGORITHMS = ("DQN", "DoubleDQN")


@dataclass
class QNetwork:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feature_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    feature_scale: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))

    @classmethod
    def initialize(cls, hidden_width: int, rng: np.random.Generator,
                   feature_mean=None, feature_scale=None) -> "QNetwork":
        """Glorot-uniform weights, zero biases."""
        dims = [N_FEATURES, hidden_width, hidden_width, 2]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        net = cls(weights, biases)
        if feature_mean is not None:
            net.feature_mean = np.asarray(feature_mean, float)
        if feature_scale is not None:
            net.feature_scale = np.asarray(feature_scale, float)
        return net

    @classmethod
    def zeros(cls, hidden_width: int) -> "QNetwork":
        dims = [N_FEATURES, hidden_width, hidden_width, 2]
        return cls(
            [np.zeros((i, o)) for i, o in zip(dims[:-1], dims[1:])],
            [np.zeros(o) for o in dims[1:]],
        )

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W1, b1, W2, b2, W3, b3."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "QNetwork":
        return QNetwork(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.feature_mean.copy(),
            self.feature_scale.copy(),
        )

    def normalize(self, states: np.ndarray) -> np.ndarray:
        return (np.asarray(states, float) - self.feature_mean) / self.feature_scale

    def predict(self, states: np.ndarray) -> np.ndarray:
        """Q-values, shape ``(M, 2)``, for an ``(M, 4)`` array of raw features."""
        return self._forward(np.atleast_2d(states))[0]

    def _forward(self, states):
        h = self.normalize(states)
        cache = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == last else np.maximum(z, 0.0)
            cache.append(h)
        return h, cache

    def loss_and_grads(self, states, actions, targets):
        """Mean squared TD error and its gradient w.r.t. :meth:`params`."""
        q, cache = self._forward(states)
        m = len(actions)
        rows = np.arange(m)
        residual = q[rows, actions] - targets
        loss = float(np.mean(residual ** 2))
        delta = np.zeros_like(q)
        delta[rows, actions] = 2.0 * residual / m
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            grads[2 * k] = cache[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.weights[k].T) * (cache[k] > 0)
        return loss, grads

    def to_json(self) -> dict:
        return {
            "layer_dims": self.layer_dims,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "normalizer": {
                "mean": self.feature_mean.tolist(),
                "scale": self.feature_scale.tolist(),
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QNetwork":
        net = cls(
            [np.array(w, dtype=float) for w in obj["weights"]],
            [np.array(b, dtype=float) for b in obj["biases"]],
            np.array(obj["normalizer"]["mean"], dtype=float),
            np.array(obj["normalizer"]["scale"], dtype=float),
        )
        if net.layer_dims != list(obj["layer_dims"]):
            raise InvalidInputError("layer_dims does not match weight shapes")
        return net

    def save(self, path) -> None:
        Path(path).write_text(json.dumps({"kind": "qnetwork", **self.to_json()}))

    def __eq__(self, other):
        if not isinstance(other, QNetwork):
            return NotImplemented
        pairs = list(zip(self.params(), other.params()))
        pairs += [(self.feature_mean, other.feature_mean), (self.feature_scale, other.feature_scale)]
        return len(self.weights) == len(other.weights) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in pairs
        )


def fit_normalizer(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    states = np.asarray(states, float).reshape(-1, N_FEATURES)
    mean = states.mean(axis=0)
    scale = states.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def forward(network: QNetwork, state: State) -> tuple[float, float]:
    q_notsend, q_send = network.predict(state.as_array())[0]
    return float(q_notsend), float(q_send)


def dqn_target(transition: Transition, target_net: QNetwork, gamma: float) -> float:
    if transition.terminal:
        return float(transition.reward)
    return float(transition.reward + gamma * max(forward(target_net, transition.next_state)))


def double_dqn_target(transition: Transition, online_net: QNetwork,
                      target_net: QNetwork, gamma: float) -> float:
    if transition.terminal:
        return float(transition.reward)
    q_online = forward(online_net, transition.next_state)
    best = 1 if q_online[1] > q_online[0] else 0
    return float(transition.reward + gamma * forward(target_net, transition.next_state)[best])


def batch_targets(rewards, next_states, terminals, gamma, target_net, online_net=None):
    """Vectorized TD targets.  ``online_net`` selects the Double-DQN form."""
    q_target = target_net.predict(next_states)
    if online_net is None:
        bootstrap = q_target.max(axis=1)
    else:
        q_online = online_net.predict(next_states)
        best = (q_online[:, 1] > q_online[:, 0]).astype(int)
        bootstrap = q_target[np.arange(len(best)), best]
    return rewards + gamma * np.where(terminals, 0.0, bootstrap)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    learning_rate: float = 0.01
    batch_size: int = 64
    target_update_period: int = 100
    n_updates: int = 5000
    hidden_width: int = 32
    algorithm: str = "DoubleDQN"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise InvalidParameterError("learning_rate must be > 0")
        for name in ("batch_size", "target_update_period", "hidden_width"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
        if self.n_updates < 0:
            raise InvalidParameterError("n_updates must be >= 0")
        if self.algorithm not in ALGORITHMS:
            raise InvalidParameterError(f"algorithm must be one of {ALGORITHMS}")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    loss_curve: list[tuple[int, float]]
    final_network: QNetwork
    config: TrainConfig

    def __eq__(self, other):
        if not isinstance(other, TrainReport):
            return NotImplemented
        return (self.loss_curve == other.loss_curve
                and self.final_network == other.final_network
                and self.config == other.config)


class TransitionPool:
    """Flattened transitions of a batch, used for uniform resampling."""

    def __init__(self, batch: TrajectoryBatch):
        arr = batch.arrays
        self.states = arr.states.reshape(-1, N_FEATURES)
        self.actions = arr.actions.reshape(-1)
        self.rewards = arr.rewards.reshape(-1)
        self.next_states = arr.next_states.reshape(-1, N_FEATURES)
        self.terminals = arr.terminals.reshape(-1)

    def __len__(self):
        return len(self.actions)


def train_offline(batch: TrajectoryBatch, config: TrainConfig) -> TrainReport:
    """Fit a Q-network to a fixed batch.

    Raises :class:`DivergenceError` carrying the partial loss curve if any
    mini-batch loss is non-finite.
    """
    if batch is None or len(batch) == 0:
        raise InvalidInputError("empty batch")
    pool = TransitionPool(batch)
    rng = np.random.default_rng(config.seed)
    mean, scale = fit_normalizer(pool.states)
    online = QNetwork.initialize(config.hidden_width, rng, mean, scale)
    target = online.copy()
    double = config.algorithm == "DoubleDQN"
    curve: list[tuple[int, float]] = []

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(config.n_updates):
            idx = rng.integers(0, len(pool), size=config.batch_size)
            y = batch_targets(
                pool.rewards[idx], pool.next_states[idx], pool.terminals[idx],
                config.gamma, target, online if double else None,
            )
            loss, grads = online.loss_and_grads(pool.states[idx], pool.actions[idx], y)
            curve.append((k, loss))
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at update {k}", curve)
            for param, grad in zip(online.params(), grads):
                param -= config.learning_rate * grad
            if (k + 1) % config.target_update_period == 0:
                target = online.copy()

    return TrainReport(curve, online, config)

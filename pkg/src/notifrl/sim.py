"""Queue-based notification simulator.

Each episode is one sampled user.  The time step is four hours, so the
default horizon of 42 steps is one week.  Within a step events happen in a
fixed order::

    send from queue -> real-time arrivals -> visit draw (badge reset)
    -> new queue arrivals -> expiry of queued candidates -> advance clock

The environment is single-threaded and owns its random stream; run as many
instances in parallel as needed.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IllegalStateError, InvalidParameterError
from .mdp import Action, Policy, State, Transition, discounted_return

MAX_EXPIRY_STEPS = 18
WEEK_STEPS = 42


def default_weekly_profile() -> list[float]:
    return [0.5, 1.0, 1.5, 1.5, 1.0, 0.5] * 7


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 42
    base_arrival_rate: float = 0.5
    weekly_profile: tuple[float, ...] = field(default_factory=lambda: tuple(default_weekly_profile()))
    realtime_rate: float = 0.1
    visit_weights: tuple[float, float, float] = (-2.0, 2.0, 0.8)
    expiry_send_prob: float = 0.5
    activeness_dist: tuple[float, float] = (2.0, 5.0)

    def __post_init__(self):
        object.__setattr__(self, "weekly_profile", tuple(float(v) for v in self.weekly_profile))
        object.__setattr__(self, "visit_weights", tuple(float(v) for v in self.visit_weights))
        object.__setattr__(self, "activeness_dist", tuple(float(v) for v in self.activeness_dist))
        self.validate()

    def validate(self) -> None:
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidParameterError(f"horizon must be a positive integer, got {self.horizon}")
        if self.base_arrival_rate <= 0:
            raise InvalidParameterError("base_arrival_rate must be > 0")
        if self.realtime_rate < 0:
            raise InvalidParameterError("realtime_rate must be >= 0")
        if len(self.weekly_profile) != WEEK_STEPS or min(self.weekly_profile) <= 0:
            raise InvalidParameterError(f"weekly_profile needs {WEEK_STEPS} positive entries")
        if len(self.visit_weights) != 3:
            raise InvalidParameterError("visit_weights must be (w0, w1, w2)")
        if self.expiry_send_prob != 0.5:
            raise InvalidParameterError("expiry_send_prob is fixed at 0.5")
        if len(self.activeness_dist) != 2 or min(self.activeness_dist) <= 0:
            raise InvalidParameterError("activeness_dist must be positive Beta(alpha, beta)")

    def arrival_rate(self, time_index: int) -> float:
        return self.base_arrival_rate * self.weekly_profile[time_index % WEEK_STEPS]

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("weekly_profile", "visit_weights", "activeness_dist"):
            out[key] = list(out[key])
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise InvalidParameterError(f"unknown SimConfig fields: {sorted(unknown)}")
        return cls(**obj)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "SimConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


def visit_probability(badge_count, activeness, weights=(-2.0, 2.0, 0.8)):
    """Logistic visit model in (activeness, log(1 + badge)).

    Accepts scalars or numpy arrays.
    """
    w0, w1, w2 = weights
    if np.ndim(badge_count) == 0 and np.ndim(activeness) == 0:
        z = w0 + w1 * activeness + w2 * math.log1p(badge_count)
        return 1.0 / (1.0 + math.exp(-z))
    z = w0 + w1 * np.asarray(activeness, float) + w2 * np.log1p(np.asarray(badge_count, float))
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class StepEvents:
    """Counts recorded during the last step, for diagnostics and invariant checks."""

    sent_from_queue: int = 0
    realtime: int = 0
    visited: bool = False
    badge_before_visit: int = 0
    arrivals: int = 0
    expired: int = 0
    expired_sent: int = 0


class NotificationEnv:
    """One user's notification queue, badge count and visit process."""

    def __init__(self, config: SimConfig | None = None):
        self.config = config or SimConfig()
        self._rng: np.random.Generator | None = None
        self.queue: list[tuple[float, int]] = []
        self.badge_count = 0
        self.activeness = 0.0
        self.time_index = 0
        self.done = True
        self.last_events = StepEvents()

    def reset(self, seed: int) -> State:
        cfg = self.config
        self._rng = np.random.default_rng(seed)
        alpha, beta = cfg.activeness_dist
        self.activeness = float(self._rng.beta(alpha, beta))
        self.queue = []
        self.badge_count = 0
        self.time_index = 0
        self.done = False
        self.last_events = StepEvents()
        return self.observe()

    def observe(self) -> State:
        return State(self.badge_count, len(self.queue), self.time_index, self.activeness)

    def step(self, action: Action) -> tuple[State, int, bool]:
        if self.done:
            raise IllegalStateError("step() called on a finished episode; call reset()")
        cfg = self.config
        rng = self._rng
        ev = StepEvents()
        queue = self.queue
        badge = self.badge_count

        if action == Action.SEND and queue:
            top = max(range(len(queue)), key=lambda k: queue[k][0])
            queue.pop(top)
            badge += 1
            ev.sent_from_queue = 1

        ev.realtime = int(rng.poisson(cfg.realtime_rate))
        badge += ev.realtime

        ev.badge_before_visit = badge
        reward = 0
        if rng.random() < visit_probability(badge, self.activeness, cfg.visit_weights):
            reward = 1
            badge = 0
            ev.visited = True

        t = self.time_index
        ev.arrivals = int(rng.poisson(cfg.arrival_rate(t)))
        if ev.arrivals:
            relevance = rng.random(ev.arrivals)
            offsets = rng.integers(1, MAX_EXPIRY_STEPS + 1, size=ev.arrivals)
            queue.extend(zip(relevance.tolist(), (t + offsets).tolist()))

        new_t = t + 1
        expiring = [c for c in queue if c[1] == new_t]
        if expiring:
            self.queue = queue = [c for c in queue if c[1] != new_t]
            ev.expired = len(expiring)
            ev.expired_sent = int((rng.random(ev.expired) < cfg.expiry_send_prob).sum())
            badge += ev.expired_sent

        self.badge_count = badge
        self.time_index = new_t
        self.done = new_t == cfg.horizon
        self.last_events = ev
        return self.observe(), reward, self.done


def policy_rng(episode_seed: int) -> np.random.Generator:
    """Action-sampling stream for an episode, independent of the environment stream."""
    return np.random.default_rng([episode_seed, 1])


def run_episodes(policy: Policy, config: SimConfig, seeds: Sequence[int], record: bool = False):
    """Run one episode per seed in lockstep.

    The policy is queried once per time step for all episodes at once.
    Returns ``(rewards, logs)`` where ``rewards`` is an ``(n, horizon)`` array
    and ``logs`` holds one list of :class:`Transition` per episode when
    ``record`` is set (otherwise ``None``).
    """
    seeds = [int(s) for s in seeds]
    n, horizon = len(seeds), config.horizon
    envs = [NotificationEnv(config) for _ in seeds]
    states = [env.reset(seed) for env, seed in zip(envs, seeds)]
    prngs = [policy_rng(seed) for seed in seeds]
    rewards = np.zeros((n, horizon))
    logs = [[] for _ in seeds] if record else None
    for t in range(horizon):
        features = np.array([s.to_list() for s in states], dtype=float)
        p_send = policy.prob_send_batch(features)
        actions = [Action.SEND if prngs[i].random() < p_send[i] else Action.NOT_SEND
                   for i in range(n)]
        if record:
            probs = policy.action_prob_batch(features, np.array(actions, dtype=np.int64))
        for i, env in enumerate(envs):
            next_state, reward, done = env.step(actions[i])
            rewards[i, t] = reward
            if record:
                logs[i].append(
                    Transition(states[i], actions[i], float(probs[i]), reward, next_state, done)
                )
            states[i] = next_state
    return rewards, logs


def rollout_value(
    policy: Policy,
    config: SimConfig,
    n_episodes: int,
    seed: int,
    gamma: float = 1.0,
) -> tuple[float, float]:
    """Monte-Carlo value of ``policy`` in the simulator.

    Episode ``i`` uses seed ``seed + i``.  Returns the mean discounted return
    and its standard error (0 for a single episode).
    """
    if n_episodes < 1:
        raise InvalidParameterError("n_episodes must be >= 1")
    rewards, _ = run_episodes(policy, config, range(seed, seed + n_episodes))
    returns = np.array([discounted_return(row, gamma) for row in rewards])
    if n_episodes == 1:
        return float(returns[0]), 0.0
    return float(returns.mean()), float(returns.std(ddof=1) / math.sqrt(n_episodes))

"""MDP vocabulary: actions, states, logged transitions, trajectories and returns.

A :class:`TrajectoryBatch` is the only thing offline training and offline
evaluation ever see.  Besides the object view (lists of :class:`Transition`)
it exposes dense ``(N, T, ...)`` arrays that the numeric code works on.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

N_FEATURES = 4
FEATURE_NAMES = ("badge_count", "queue_size", "time_index", "activeness")


class Action(enum.IntEnum):
    NOT_SEND = 0
    SEND = 1


ACTIONS = (Action.NOT_SEND, Action.SEND)


@dataclass(frozen=True, slots=True)
class State:
    """Observation of one user at one decision step."""

    badge_count: int
    queue_size: int
    time_index: int
    activeness: float

    def __post_init__(self):
        if self.badge_count < 0 or self.queue_size < 0 or self.time_index < 0:
            raise InvalidInputError(f"negative count in {self!r}")
        if not 0.0 <= self.activeness <= 1.0:
            raise InvalidInputError(f"activeness outside [0, 1] in {self!r}")

    def to_list(self) -> list:
        return [self.badge_count, self.queue_size, self.time_index, self.activeness]

    @classmethod
    def from_list(cls, values: Sequence) -> "State":
        badge, queue, time_index, activeness = values
        return cls(int(badge), int(queue), int(time_index), float(activeness))

    def as_array(self) -> np.ndarray:
        return np.array(self.to_list(), dtype=float)


@dataclass(frozen=True, slots=True)
class Transition:
    state: State
    action: Action
    behavior_prob: float
    reward: float
    next_state: State
    terminal: bool = False

    def __post_init__(self):
        if not 0.0 < self.behavior_prob <= 1.0:
            raise InvalidInputError(
                f"behavior_prob must be in (0, 1], got {self.behavior_prob}"
            )
        if self.reward not in (0, 1):
            raise InvalidInputError(f"reward must be 0 or 1, got {self.reward}")

    def to_json(self) -> dict:
        return {
            "s": self.state.to_list(),
            "a": int(self.action),
            "bp": float(self.behavior_prob),
            "r": int(self.reward),
            "s2": self.next_state.to_list(),
            "done": bool(self.terminal),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Transition":
        return cls(
            state=State.from_list(obj["s"]),
            action=Action(int(obj["a"])),
            behavior_prob=float(obj["bp"]),
            reward=int(obj["r"]),
            next_state=State.from_list(obj["s2"]),
            terminal=bool(obj["done"]),
        )


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[Transition, ...]
    episode_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise InvalidInputError("trajectory has no steps")
        self.check_chaining()

    def __len__(self):
        return len(self.steps)

    def check_chaining(self) -> None:
        last = len(self.steps) - 1
        for t, step in enumerate(self.steps):
            if t < last:
                if step.next_state != self.steps[t + 1].state:
                    raise InvalidInputError(
                        f"episode {self.episode_seed}: next_state at step {t} "
                        "does not match the following state"
                    )
                if step.terminal:
                    raise InvalidInputError(
                        f"episode {self.episode_seed}: terminal flag before the last step"
                    )

    @property
    def rewards(self) -> list[float]:
        return [step.reward for step in self.steps]

    def to_json(self) -> dict:
        return {
            "episode_seed": int(self.episode_seed),
            "steps": [step.to_json() for step in self.steps],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Trajectory":
        return cls(
            steps=tuple(Transition.from_json(s) for s in obj["steps"]),
            episode_seed=int(obj["episode_seed"]),
        )


@dataclass(frozen=True)
class TrajectoryBatch:
    """Fixed-horizon set of logged trajectories."""

    trajectories: tuple[Trajectory, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if not self.trajectories:
            raise InvalidInputError("batch must contain at least one trajectory")
        horizon = len(self.trajectories[0])
        for traj in self.trajectories:
            if len(traj) != horizon:
                raise InvalidInputError(
                    f"trajectory lengths differ: {len(traj)} != {horizon}"
                )

    def __len__(self):
        return len(self.trajectories)

    @property
    def horizon(self) -> int:
        return len(self.trajectories[0])

    @property
    def n_transitions(self) -> int:
        return len(self) * self.horizon

    def transitions(self) -> Iterable[Transition]:
        for traj in self.trajectories:
            yield from traj.steps

    @cached_property
    def arrays(self) -> "BatchArrays":
        return BatchArrays.from_batch(self)


@dataclass(frozen=True)
class BatchArrays:
    """Dense view of a batch; leading axes are (trajectory, step)."""

    states: np.ndarray
    actions: np.ndarray
    behavior_probs: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    @classmethod
    def from_batch(cls, batch: TrajectoryBatch) -> "BatchArrays":
        n, horizon = len(batch), batch.horizon
        flat = list(batch.transitions())
        states = np.array([tr.state.to_list() for tr in flat], dtype=float)
        next_states = np.array([tr.next_state.to_list() for tr in flat], dtype=float)
        arrays = cls(
            states=states.reshape(n, horizon, N_FEATURES),
            actions=np.array([int(tr.action) for tr in flat], dtype=np.int64).reshape(n, horizon),
            behavior_probs=np.array([tr.behavior_prob for tr in flat]).reshape(n, horizon),
            rewards=np.array([tr.reward for tr in flat], dtype=float).reshape(n, horizon),
            next_states=next_states.reshape(n, horizon, N_FEATURES),
            terminals=np.array([tr.terminal for tr in flat], dtype=bool).reshape(n, horizon),
        )
        for arr in vars(arrays).values():
            arr.flags.writeable = False
        return arrays


class Policy:
    """Two-action stochastic policy.

    Subclasses implement :meth:`prob_send`.  :meth:`prob_send_batch` may be
    overridden with a vectorized version; the default loops over rows.
    """

    def prob_send(self, state: State) -> float:
        raise NotImplementedError

    def action_prob(self, state: State, action: Action) -> float:
        p_send = self.prob_send(state)
        return p_send if action == Action.SEND else 1.0 - p_send

    def sample(self, state: State, rng: np.random.Generator) -> Action:
        # Always consume exactly one uniform so streams stay aligned across policies.
        u = rng.random()
        return Action.SEND if u < self.prob_send(state) else Action.NOT_SEND

    def prob_send_batch(self, states: np.ndarray) -> np.ndarray:
        """P(SEND) for each row of an ``(M, 4)`` feature array."""
        states = np.asarray(states, dtype=float).reshape(-1, N_FEATURES)
        return np.array([self.prob_send(State.from_list(row)) for row in states])

    def action_prob_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        shape = np.shape(actions)
        p_send = self.prob_send_batch(np.reshape(states, (-1, N_FEATURES)))
        actions = np.reshape(actions, -1)
        probs = np.where(actions == Action.SEND, p_send, 1.0 - p_send)
        return probs.reshape(shape)

    @property
    def is_deterministic(self) -> bool:
        return False


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of ``gamma**k * rewards[k]``; the empty sequence returns 0."""
    if not 0.0 < gamma <= 1.0:
        raise InvalidParameterError(f"gamma must be in (0, 1], got {gamma}")
    total = 0.0
    discount = 1.0
    for r in rewards:
        if not math.isfinite(r):
            raise InvalidInputError(f"non-finite reward {r}")
        total += discount * r
        discount *= gamma
    return total


def undiscounted_value(batch: TrajectoryBatch) -> float:
    """Average over trajectories of the total reward."""
    if batch is None or len(batch) == 0:
        raise InvalidInputError("empty batch")
    return float(batch.arrays.rewards.sum(axis=1).mean())


def write_jsonl(batch: TrajectoryBatch, path) -> None:
    with open(path, "w") as fh:
        for traj in batch.trajectories:
            fh.write(json.dumps(traj.to_json()))
            fh.write("\n")


def read_jsonl(path, metadata: dict | None = None) -> TrajectoryBatch:
    path = Path(path)
    trajectories = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                trajectories.append(Trajectory.from_json(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
    if metadata is None:
        sidecar = metadata_path(path)
        metadata = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return TrajectoryBatch(tuple(trajectories), metadata=metadata)


def metadata_path(dataset_path) -> Path:
    path = Path(dataset_path)
    return path.with_name(path.stem + ".meta.json")

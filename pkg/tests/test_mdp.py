import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from notifrl.errors import InvalidInputError, InvalidParameterError
from notifrl.mdp import (
    Action,
    State,
    Trajectory,
    TrajectoryBatch,
    Transition,
    discounted_return,
    read_jsonl,
    undiscounted_value,
    write_jsonl,
)
from notifrl.policies import UniformPolicy, collect_batch
from notifrl.sim import SimConfig, rollout_value


def _traj(rewards, seed=0):
    steps = []
    for t, r in enumerate(rewards):
        steps.append(Transition(State(0, 0, t, 0.5), Action.SEND, 0.5, r,
                                State(0, 0, t + 1, 0.5), t == len(rewards) - 1))
    return Trajectory(tuple(steps), seed)


def test_action_encoding():
    assert len(Action) == 2
    assert int(Action.SEND) == 1 and int(Action.NOT_SEND) == 0


@pytest.mark.parametrize("rewards,gamma,expected", [
    ([1, 0, 1], 1.0, 2.0),
    ([1, 1], 0.5, 1.5),
    ([], 0.9, 0.0),
])
def test_discounted_return_examples(rewards, gamma, expected):
    assert discounted_return(rewards, gamma) == expected


@pytest.mark.parametrize("gamma", [0.0, -0.1, 1.5])
def test_discounted_return_rejects_gamma(gamma):
    with pytest.raises(InvalidParameterError):
        discounted_return([1.0], gamma)


@given(st.lists(st.floats(-10, 10), max_size=20), st.floats(-5, 5), st.floats(0.01, 1.0))
def test_return_linearity(rewards, scale, gamma):
    lhs = discounted_return([scale * r for r in rewards], gamma)
    rhs = scale * discounted_return(rewards, gamma)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_undiscounted_value_examples():
    batch = TrajectoryBatch((_traj([1, 1, 1, 0]), _traj([0, 1, 0, 0], 1)))
    assert undiscounted_value(batch) == 2.0
    assert undiscounted_value(TrajectoryBatch((_traj([0, 0, 0]),))) == 0.0


def test_undiscounted_value_matches_average_return():
    rng = np.random.default_rng(3)
    batch = TrajectoryBatch(tuple(_traj(rng.integers(0, 2, 6).tolist(), i) for i in range(20)))
    mean_return = np.mean([discounted_return(t.rewards, 1.0) for t in batch.trajectories])
    assert undiscounted_value(batch) == pytest.approx(mean_return, abs=1e-12)


def test_empty_batch_rejected():
    with pytest.raises(InvalidInputError):
        TrajectoryBatch(())
    with pytest.raises(InvalidInputError):
        undiscounted_value(None)


def test_undiscounted_value_matches_independent_rerollout():
    cfg = SimConfig()
    batch = collect_batch(UniformPolicy(), cfg, 1000, seed=11)
    mean, _ = rollout_value(UniformPolicy(), cfg, 1000, seed=11, gamma=1.0)
    assert undiscounted_value(batch) == mean


def test_state_invariants():
    with pytest.raises(InvalidInputError):
        State(-1, 0, 0, 0.5)
    with pytest.raises(InvalidInputError):
        State(0, 0, 0, 1.5)


def test_transition_invariants():
    s = State(0, 0, 0, 0.5)
    with pytest.raises(InvalidInputError):
        Transition(s, Action.SEND, 0.0, 1, s)
    with pytest.raises(InvalidInputError):
        Transition(s, Action.SEND, 0.5, 2, s)


def test_chaining_checked():
    a = Transition(State(0, 0, 0, 0.5), Action.SEND, 0.5, 0, State(1, 0, 1, 0.5))
    b = Transition(State(2, 0, 1, 0.5), Action.SEND, 0.5, 0, State(0, 0, 2, 0.5), True)
    with pytest.raises(InvalidInputError):
        Trajectory((a, b))


def test_mixed_horizons_rejected():
    with pytest.raises(InvalidInputError):
        TrajectoryBatch((_traj([1, 0]), _traj([1, 0, 0])))


def test_policy_contract_uniform():
    pol = UniformPolicy()
    s = State(1, 2, 3, 0.4)
    assert pol.action_prob(s, Action.SEND) + pol.action_prob(s, Action.NOT_SEND) == 1.0
    rng = np.random.default_rng(0)
    n = 100_000
    sends = sum(pol.sample(s, rng) == Action.SEND for _ in range(n))
    assert abs(sends - n / 2) <= 3 * np.sqrt(n * 0.25)


def test_jsonl_round_trip(tmp_path):
    batch = collect_batch(UniformPolicy(), SimConfig(horizon=5), 3, seed=2)
    path = tmp_path / "data.jsonl"
    write_jsonl(batch, path)
    first = json.loads(path.read_text().splitlines()[0])
    assert list(first) == ["episode_seed", "steps"]
    assert list(first["steps"][0]) == ["s", "a", "bp", "r", "s2", "done"]
    loaded = read_jsonl(path)
    assert loaded.trajectories == batch.trajectories
    np.testing.assert_array_equal(loaded.arrays.states, batch.arrays.states)


def test_jsonl_load_checks_chaining(tmp_path):
    batch = collect_batch(UniformPolicy(), SimConfig(horizon=3), 1, seed=2)
    obj = batch.trajectories[0].to_json()
    obj["steps"][1]["s"][0] += 7
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(InvalidInputError):
        read_jsonl(path)

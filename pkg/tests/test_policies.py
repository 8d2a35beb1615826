import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from notifrl.errors import InvalidParameterError, PropensityError
from notifrl.mdp import Action, State, read_jsonl
from notifrl.policies import (
    BaselinePolicy,
    ConstantPolicy,
    EpsilonGreedyPolicy,
    GreedyQPolicy,
    UniformPolicy,
    baseline_decide,
    collect_batch,
    epsilon_greedy_prob,
    load_policy,
    save_batch,
    save_policy,
)
from notifrl.qlearn import QNetwork
from notifrl.sim import SimConfig, visit_probability

states = st.builds(State, st.integers(0, 30), st.integers(0, 30), st.integers(0, 41),
                   st.floats(0, 1))


class FixedUplift(BaselinePolicy):
    """Baseline with injected visit probabilities, for arithmetic checks."""

    def __init__(self, tau, p_send, p_not):
        super().__init__(tau)
        self._p = (p_send, p_not)

    def uplift(self, badge, activeness):
        p_send, p_not = self._p
        return np.full(np.shape(badge), (p_send - p_not) / max(p_not, self.denom_floor))


def test_baseline_uplift_arithmetic():
    s = State(0, 3, 0, 0.5)
    assert FixedUplift(0.1, 0.5, 0.4).prob_send(s) == 1.0
    assert FixedUplift(0.3, 0.5, 0.4).prob_send(s) == 0.0


@given(states, st.floats(0.01, 100.0))
def test_baseline_scale_invariance(state, c):
    p_send, p_not = 0.5, 0.4
    a = FixedUplift(0.2, p_send, p_not).prob_send(state)
    b = FixedUplift(0.2, c * p_send, c * p_not).prob_send(state)
    assert a == b


@given(states)
def test_baseline_huge_tau_never_sends(state):
    assert baseline_decide(state, 1e12) == Action.NOT_SEND


@given(states)
def test_baseline_zero_tau_is_greedy(state):
    expected = Action.SEND if state.queue_size > 0 else Action.NOT_SEND
    assert baseline_decide(state, 0.0) == expected


def test_baseline_matches_visit_model():
    s = State(1, 2, 0, 0.3)
    p_send, p_not = visit_probability(2, 0.3), visit_probability(1, 0.3)
    uplift = (p_send - p_not) / p_not
    assert baseline_decide(s, uplift - 1e-9) == Action.SEND
    assert baseline_decide(s, uplift + 1e-9) == Action.NOT_SEND


def test_baseline_rejects_negative_tau():
    with pytest.raises(InvalidParameterError):
        BaselinePolicy(-0.1)


@pytest.mark.parametrize("eps,base,p_send,p_not", [
    (0.2, 1.0, 0.9, 0.1),
    (0.2, 0.0, 0.1, 0.9),
    (1.0, 1.0, 0.5, 0.5),
    (1.0, 0.0, 0.5, 0.5),
    (0.0, 1.0, 1.0, 0.0),
])
def test_epsilon_greedy_probs(eps, base, p_send, p_not):
    pol = EpsilonGreedyPolicy(ConstantPolicy(base), eps)
    s = State(0, 1, 0, 0.5)
    assert epsilon_greedy_prob(pol, s, Action.SEND) == p_send
    assert epsilon_greedy_prob(pol, s, Action.NOT_SEND) == p_not


@given(states, st.floats(0, 1), st.floats(0, 1))
def test_epsilon_greedy_sums_to_one(state, eps, base_p):
    pol = EpsilonGreedyPolicy(ConstantPolicy(base_p), eps)
    total = pol.action_prob(state, Action.SEND) + pol.action_prob(state, Action.NOT_SEND)
    assert abs(total - 1.0) <= 1e-12
    assert min(pol.action_prob(state, a) for a in Action) >= eps / 2 - 1e-15


def test_epsilon_greedy_zero_equals_base():
    base = BaselinePolicy(0.3)
    pol = EpsilonGreedyPolicy(base, 0.0)
    for s in [State(b, q, 0, a) for b in range(4) for q in range(3) for a in (0.1, 0.7)]:
        assert pol.prob_send(s) == base.prob_send(s)


def test_greedy_q_tie_prefers_not_send():
    net = QNetwork.zeros(4)
    assert GreedyQPolicy(net).prob_send(State(0, 1, 0, 0.5)) == 0.0
    net.biases[-1][:] = [0.0, 1.0]
    assert GreedyQPolicy(net).prob_send(State(0, 1, 0, 0.5)) == 1.0


def test_collect_batch_counts_and_propensities():
    pol = EpsilonGreedyPolicy(BaselinePolicy(0.3), 0.2)
    batch = collect_batch(pol, SimConfig(), 100, seed=0)
    assert batch.n_transitions == 4200
    assert set(np.unique(batch.arrays.behavior_probs)) <= {0.1, 0.9}
    assert batch.horizon == 42
    # logged propensity is the policy's probability of the logged action
    for tr in list(batch.transitions())[:200]:
        assert tr.behavior_prob == pol.action_prob(tr.state, tr.action)


def test_collect_batch_uniform_send_fraction():
    pol = EpsilonGreedyPolicy(BaselinePolicy(0.3), 1.0)
    batch = collect_batch(pol, SimConfig(), 2400, seed=1)
    n = batch.n_transitions
    assert n >= 100_000
    sends = batch.arrays.actions.sum()
    assert abs(sends - n / 2) <= 3 * math.sqrt(n / 4)


def test_collect_batch_refuses_deterministic():
    with pytest.raises(PropensityError):
        collect_batch(BaselinePolicy(0.3), SimConfig(), 5, seed=0)
    with pytest.raises(PropensityError):
        collect_batch(EpsilonGreedyPolicy(BaselinePolicy(0.3), 0.0), SimConfig(), 5, seed=0)


def test_collect_batch_deterministic_given_seed():
    pol = EpsilonGreedyPolicy(BaselinePolicy(0.3), 0.2)
    a = collect_batch(pol, SimConfig(horizon=10), 20, seed=3)
    b = collect_batch(pol, SimConfig(horizon=10), 20, seed=3)
    assert a.trajectories == b.trajectories


def test_save_batch_writes_sidecar(tmp_path):
    pol = EpsilonGreedyPolicy(BaselinePolicy(0.3), 0.2)
    batch = collect_batch(pol, SimConfig(horizon=6), 4, seed=9)
    path = tmp_path / "train.jsonl"
    save_batch(batch, path)
    meta = json.loads((tmp_path / "train.meta.json").read_text())
    assert {"epsilon", "tau", "config", "seed", "n"} <= set(meta)
    assert meta["epsilon"] == 0.2 and meta["tau"] == 0.3 and meta["n"] == 4
    loaded = read_jsonl(path)
    assert loaded.trajectories == batch.trajectories
    assert loaded.metadata["seed"] == 9


def test_policy_json_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    net = QNetwork.initialize(8, rng)
    for pol in [EpsilonGreedyPolicy(BaselinePolicy(0.25), 0.2), UniformPolicy(), GreedyQPolicy(net)]:
        path = tmp_path / "p.json"
        save_policy(pol, path)
        loaded = load_policy(path)
        feats = rng.uniform(0, 5, size=(50, 4))
        feats[:, 3] = rng.uniform(0, 1, 50)
        np.testing.assert_array_equal(loaded.prob_send_batch(feats), pol.prob_send_batch(feats))

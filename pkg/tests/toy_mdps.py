"""Small MDPs with exact answers, used as independent oracles.

Tabular states are carried in the ``badge_count`` field of :class:`State`;
the other features are held constant.
"""
import itertools

import numpy as np

from notifrl.mdp import Action, Policy, State, Trajectory, TrajectoryBatch, Transition


class TabularPolicy(Policy):
    def __init__(self, p_send):
        self.p_send = np.asarray(p_send, float)

    def prob_send(self, state):
        return float(self.p_send[state.badge_count])

    def prob_send_batch(self, states):
        states = np.asarray(states, float).reshape(-1, 4)
        return self.p_send[states[:, 0].astype(int)]

    @property
    def is_deterministic(self):
        return bool(np.all((self.p_send == 0) | (self.p_send == 1)))


def tabular_state(s, t):
    return State(int(s), 0, int(t), 0.0)


class TabularMDP:
    """Finite MDP with Bernoulli rewards and a fixed horizon."""

    def __init__(self, init, transition, reward_prob, horizon):
        self.init = np.asarray(init, float)
        self.transition = np.asarray(transition, float)  # [s, a, s']
        self.reward_prob = np.asarray(reward_prob, float)  # [s, a]
        self.horizon = horizon
        self.n_states = len(self.init)

    def exact_value(self, policy):
        """Expected total reward by enumerating every state/action path."""
        pi = np.stack([1 - policy.p_send, policy.p_send], axis=1)
        total = 0.0
        S, A, T = self.n_states, 2, self.horizon
        for states in itertools.product(range(S), repeat=T):
            for actions in itertools.product(range(A), repeat=T):
                prob = self.init[states[0]]
                for t in range(T):
                    prob *= pi[states[t], actions[t]]
                    if t + 1 < T:
                        prob *= self.transition[states[t], actions[t], states[t + 1]]
                    if prob == 0:
                        break
                if prob:
                    total += prob * sum(self.reward_prob[s, a] for s, a in zip(states, actions))
        return total

    def sample_batch(self, policy, n, rng):
        S, T = self.n_states, self.horizon
        s = rng.choice(S, size=n, p=self.init)
        cols = []
        for t in range(T):
            p_send = policy.p_send[s]
            a = (rng.random(n) < p_send).astype(int)
            r = (rng.random(n) < self.reward_prob[s, a]).astype(int)
            cum = self.transition[s, a].cumsum(axis=1)
            s2 = (rng.random(n)[:, None] > cum).sum(axis=1).clip(max=S - 1)
            bp = np.where(a == 1, p_send, 1 - p_send)
            cols.append((s, a, bp, r, s2))
            s = s2
        trajectories = []
        for i in range(n):
            steps = []
            for t, (s_, a_, bp_, r_, s2_) in enumerate(cols):
                steps.append(Transition(
                    tabular_state(s_[i], t), Action(int(a_[i])), float(bp_[i]), int(r_[i]),
                    tabular_state(s2_[i], t + 1), t == T - 1,
                ))
            trajectories.append(Trajectory(tuple(steps), i))
        return TrajectoryBatch(tuple(trajectories))


def three_state_mdp():
    transition = np.array([
        [[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]],
        [[0.5, 0.4, 0.1], [0.2, 0.2, 0.6]],
        [[0.6, 0.1, 0.3], [0.3, 0.3, 0.4]],
    ])
    reward_prob = np.array([[0.1, 0.3], [0.5, 0.2], [0.9, 0.6]])
    return TabularMDP([0.5, 0.3, 0.2], transition, reward_prob, horizon=4)


# Deterministic chain: SEND moves right (capped at 4), NOT_SEND resets to 0.
# Reward 1 only for SEND in states 1 and 2.
CHAIN_STATES = 5
CHAIN_GAMMA = 0.9


def chain_step(s, a):
    s2 = min(s + 1, CHAIN_STATES - 1) if a == 1 else 0
    r = int(a == 1 and s in (1, 2))
    return s2, r


def chain_value_iteration(gamma=CHAIN_GAMMA, tol=1e-12):
    q = np.zeros((CHAIN_STATES, 2))
    while True:
        v = q.max(axis=1)
        new = np.zeros_like(q)
        for s in range(CHAIN_STATES):
            for a in (0, 1):
                s2, r = chain_step(s, a)
                new[s, a] = r + gamma * v[s2]
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new


def chain_state(s):
    return State(int(s), 0, 0, 0.0)


def chain_batch(n_trajectories, length, seed):
    """Uniform-random behavior from uniform start states; no terminal flags."""
    rng = np.random.default_rng(seed)
    trajectories = []
    for i in range(n_trajectories):
        s = int(rng.integers(CHAIN_STATES))
        steps = []
        for _ in range(length):
            a = int(rng.integers(2))
            s2, r = chain_step(s, a)
            steps.append(Transition(chain_state(s), Action(a), 0.5, r, chain_state(s2), False))
            s = s2
        trajectories.append(Trajectory(tuple(steps), i))
    return TrajectoryBatch(tuple(trajectories))


def one_state_noisy_batch(n_trajectories, length, seed):
    """Single state, both actions pay Bernoulli(0.5); no terminal flags."""
    rng = np.random.default_rng(seed)
    trajectories = []
    state = State(0, 0, 0, 0.0)
    for i in range(n_trajectories):
        steps = []
        for _ in range(length):
            a = int(rng.integers(2))
            r = int(rng.random() < 0.5)
            steps.append(Transition(state, Action(a), 0.5, r, state, False))
        trajectories.append(Trajectory(tuple(steps), i))
    return TrajectoryBatch(tuple(trajectories))

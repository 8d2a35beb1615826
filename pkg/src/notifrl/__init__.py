"""Offline reinforcement learning workbench for notification delivery timing.

A queue-based notification simulator, logged-data collection with an
epsilon-greedy baseline, offline (Double) DQN training, and three
importance-weighted off-policy value estimators.
"""
from .errors import (
    DivergenceError,
    IllegalStateError,
    InvalidInputError,
    InvalidParameterError,
    NotifRLError,
    PropensityError,
)
from .mdp import (
    Action,
    Policy,
    State,
    Trajectory,
    TrajectoryBatch,
    Transition,
    discounted_return,
    read_jsonl,
    undiscounted_value,
    write_jsonl,
)
from .ope import (
    DiscretizationSpec,
    Method,
    PolicyValueEstimate,
    estimate,
    one_step_estimate,
    state_marginalized_estimate,
    trajectory_estimate,
)
from .policies import (
    BaselinePolicy,
    ConstantPolicy,
    EpsilonGreedyPolicy,
    GreedyQPolicy,
    UniformPolicy,
    collect_batch,
)
from .qlearn import QNetwork, TrainConfig, TrainReport, train_offline
from .sim import NotificationEnv, SimConfig, rollout_value, run_episodes

__version__ = "0.1.0"

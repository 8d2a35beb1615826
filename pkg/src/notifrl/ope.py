"""Importance-weighting off-policy estimators over a fixed-horizon batch.

All three estimators share the form

    value = sum_t mean_i( r[i, t] * w[i, t] )

and differ only in the weights:

* one-step: the current step's propensity ratio;
* trajectory: the cumulative product of propensity ratios up to ``t``;
* state-marginalized: estimated state-marginal ratio at ``t`` times the
  current propensity ratio, where the marginal of the target policy is
  built recursively from the previous step's weights over a binned,
  action-dependent part of the state.

With ``self_normalize`` the weights of each step are divided by their mean
over trajectories.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IllegalStateError, InvalidInputError, InvalidParameterError, PropensityError
from .mdp import FEATURE_NAMES, Policy, State, TrajectoryBatch


class Method(str, enum.Enum):
    ONE_STEP = "onestep"
    TRAJECTORY = "trajectory"
    STATE_MARGINALIZED = "statemarg"


@dataclass(frozen=True)
class PolicyValueEstimate:
    method: Method
    value: float
    per_step_values: tuple[float, ...]
    self_normalized: bool
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "value": self.value,
            "per_step_values": list(self.per_step_values),
            "self_normalized": self.self_normalized,
            "diagnostics": self.diagnostics,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class DiscretizationSpec:
    """Which state features survive the reduction, and how they are binned.

    ``bin_edges`` holds one array of inner quantile edges per retained
    feature.  A value falls in bin ``k`` when exactly ``k`` edges are
    strictly below it, so the feature minimum is always in bin 0.
    """

    reduced_features: tuple[str, ...] = ("badge_count", "queue_size")
    bins_per_feature: int = 10
    bin_edges: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "reduced_features", tuple(self.reduced_features))
        unknown = set(self.reduced_features) - set(FEATURE_NAMES)
        if unknown or not self.reduced_features:
            raise InvalidParameterError(f"bad reduced_features {self.reduced_features}")
        if self.bins_per_feature < 1:
            raise InvalidParameterError("bins_per_feature must be >= 1")

    @property
    def columns(self) -> list[int]:
        return [FEATURE_NAMES.index(name) for name in self.reduced_features]

    @property
    def n_joint_bins(self) -> int:
        return self.bins_per_feature ** len(self.reduced_features)

    @property
    def is_fitted(self) -> bool:
        return self.bin_edges is not None

    def fit(self, batch: TrajectoryBatch) -> "DiscretizationSpec":
        states = batch.arrays.states.reshape(-1, len(FEATURE_NAMES))
        qs = np.arange(1, self.bins_per_feature) / self.bins_per_feature
        edges = tuple(np.unique(np.quantile(states[:, c], qs)) for c in self.columns)
        return replace(self, bin_edges=edges)

    def feature_bins(self, states: np.ndarray) -> np.ndarray:
        """Per-feature bin indices, shape ``(..., n_retained)``."""
        if not self.is_fitted:
            raise IllegalStateError("DiscretizationSpec has no bin edges; call fit() first")
        states = np.asarray(states, float)
        return np.stack(
            [np.searchsorted(e, states[..., c], side="left") for c, e in zip(self.columns, self.bin_edges)],
            axis=-1,
        )

    def joint_bins(self, states: np.ndarray) -> np.ndarray:
        per_feature = self.feature_bins(states)
        index = np.zeros(per_feature.shape[:-1], dtype=np.int64)
        for k in range(per_feature.shape[-1]):
            index = index * self.bins_per_feature + per_feature[..., k]
        return index


def reduce_state(state: State, spec: DiscretizationSpec) -> int:
    """Joint bin index of a state; drops time and activeness."""
    return int(spec.joint_bins(state.as_array()))


def propensity_ratios(batch: TrajectoryBatch, target: Policy) -> np.ndarray:
    """Target over behavior probability of every logged action, shape ``(N, T)``."""
    if batch is None or len(batch) == 0:
        raise InvalidInputError("empty batch")
    arr = batch.arrays
    if np.any(arr.behavior_probs <= 0):
        raise PropensityError("behavior_prob must be > 0 for every logged step")
    pi_target = target.action_prob_batch(arr.states, arr.actions)
    return pi_target / arr.behavior_probs


def _weight_diagnostics(w: np.ndarray) -> dict:
    total = w.sum(axis=0)
    sq = (w ** 2).sum(axis=0)
    ess = np.divide(total ** 2, sq, out=np.zeros_like(total), where=sq > 0)
    return {
        "ess": ess.tolist(),
        "max_weight": w.max(axis=0).tolist(),
        "zero_mass_steps": int(np.sum(total == 0)),
    }


def self_normalize_weights(weights: np.ndarray) -> np.ndarray:
    """Divide each step's weights by their mean over trajectories.

    Steps whose weights are all zero stay zero.
    """
    mean_w = weights.mean(axis=0)
    return np.divide(weights, mean_w, out=np.zeros_like(weights), where=mean_w > 0)


def _finish(method, batch, weights, self_normalize, gamma, extra=None):
    rewards = batch.arrays.rewards
    diagnostics = _weight_diagnostics(weights)
    if self_normalize:
        weights = self_normalize_weights(weights)
    per_step = (rewards * weights).mean(axis=0)
    if gamma is not None:
        if not 0.0 < gamma <= 1.0:
            raise InvalidParameterError(f"gamma must be in (0, 1], got {gamma}")
        per_step = per_step * gamma ** np.arange(len(per_step))
    diagnostics.update(extra or {})
    return PolicyValueEstimate(
        method=method,
        value=float(per_step.sum()),
        per_step_values=tuple(float(v) for v in per_step),
        self_normalized=self_normalize,
        diagnostics=diagnostics,
    )


def one_step_weights(batch: TrajectoryBatch, target: Policy) -> np.ndarray:
    return propensity_ratios(batch, target)


def trajectory_weights(batch: TrajectoryBatch, target: Policy) -> np.ndarray:
    return np.cumprod(propensity_ratios(batch, target), axis=1)


def one_step_estimate(batch: TrajectoryBatch, target: Policy, self_normalize: bool = True,
                      gamma: float | None = None) -> PolicyValueEstimate:
    weights = one_step_weights(batch, target)
    return _finish(Method.ONE_STEP, batch, weights, self_normalize, gamma)


def trajectory_estimate(batch: TrajectoryBatch, target: Policy, self_normalize: bool = True,
                        gamma: float | None = None) -> PolicyValueEstimate:
    weights = trajectory_weights(batch, target)
    return _finish(Method.TRAJECTORY, batch, weights, self_normalize, gamma)


def state_marginal_weights(bins: np.ndarray, ratios: np.ndarray, n_bins: int,
                           smoothing: float = 0.0):
    """Weights and marginals for binned states.

    Parameters
    ----------
    bins : int array, shape (N, T)
        Joint bin of every logged state.
    ratios : array, shape (N, T)
        Target over behavior propensity of every logged action.
    n_bins : int
        Number of joint bins.
    smoothing : float
        Additive pseudo-count per bin for the behavior marginal.

    Returns
    -------
    weights : array, shape (N, T)
    p_behavior, p_target : arrays, shape (n_bins, T)
        Estimated per-step marginals; each column sums to 1.
    empty_bin_events : int
        Logged states whose bin had zero behavior mass (weight set to 0).
    """
    n, horizon = bins.shape
    counts = np.stack([np.bincount(bins[:, t], minlength=n_bins) for t in range(horizon)], axis=1)
    p_behavior = (counts + smoothing) / (n + smoothing * n_bins)
    p_target = np.zeros_like(p_behavior)
    weights = np.zeros((n, horizon))
    p_target[:, 0] = p_behavior[:, 0]
    empty = 0
    for t in range(horizon):
        pb = p_behavior[bins[:, t], t]
        empty += int(np.sum(pb == 0))
        weights[:, t] = np.divide(p_target[bins[:, t], t] * ratios[:, t], pb,
                                  out=np.zeros(n), where=pb > 0)
        if t + 1 < horizon:
            raw = np.bincount(bins[:, t + 1], weights=weights[:, t], minlength=n_bins) / n
            mass = raw.sum()
            if mass > 0:
                p_target[:, t + 1] = raw / mass
    return weights, p_behavior, p_target, empty


def state_marginalized_estimate(batch: TrajectoryBatch, target: Policy,
                                spec: DiscretizationSpec | None = None,
                                self_normalize: bool = True, gamma: float | None = None,
                                smoothing: float = 0.0) -> PolicyValueEstimate:
    """State-marginalized importance weighting over binned badge and queue size.

    An unfitted ``spec`` is fitted on ``batch`` itself.
    """
    spec = spec or DiscretizationSpec()
    if not spec.is_fitted:
        spec = spec.fit(batch)
    ratios = propensity_ratios(batch, target)
    bins = spec.joint_bins(batch.arrays.states)
    weights, _, _, empty = state_marginal_weights(bins, ratios, spec.n_joint_bins, smoothing)
    extra = {"empty_bin_events": empty, "bins_per_feature": spec.bins_per_feature}
    return _finish(Method.STATE_MARGINALIZED, batch, weights, self_normalize, gamma, extra)


def estimate(method, batch: TrajectoryBatch, target: Policy, self_normalize: bool = True,
             bins: int = 10, gamma: float | None = None) -> PolicyValueEstimate:
    return estimate_all((method,), batch, target, self_normalize, bins, gamma)[Method(method).value]


def estimate_all(methods, batch: TrajectoryBatch, target: Policy, self_normalize: bool = True,
                 bins: int = 10, gamma: float | None = None) -> dict:
    """Several estimates of one target, sharing a single pass over the propensities.

    Returns a dict keyed by method value.
    """
    methods = [Method(m) for m in methods]
    ratios = propensity_ratios(batch, target)
    out = {}
    for method in methods:
        if method is Method.ONE_STEP:
            weights, extra = ratios, None
        elif method is Method.TRAJECTORY:
            weights, extra = np.cumprod(ratios, axis=1), None
        else:
            spec = DiscretizationSpec(bins_per_feature=bins).fit(batch)
            bins_ = spec.joint_bins(batch.arrays.states)
            weights, _, _, empty = state_marginal_weights(bins_, ratios, spec.n_joint_bins)
            extra = {"empty_bin_events": empty, "bins_per_feature": bins}
        out[method.value] = _finish(method, batch, weights, self_normalize, gamma, extra)
    return out

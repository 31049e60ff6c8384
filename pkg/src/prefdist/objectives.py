"""Training objectives over tabular policies and their exact logit gradients.

Pairwise objectives are evaluated on the aggregated pair-weight tensor
``W[x, a, b]`` (count of ``a`` beating ``b`` in ``x``, divided by ``n``), which
is exactly the dataset mean while staying ``O(|X| |A|^2)`` regardless of ``n``.

RLHF is not its own kind: it is :attr:`Kind.RKL` with ``gamma = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit, log_expit, xlogy

from .policy_core import (
    ContextDist,
    PolicyLogits,
    RewardTable,
    TabularPolicy,
    softmax_policy,
)
from .preference import PreferenceDataset


class Kind(str, enum.Enum):
    PMLE = "PMLE"
    DPO = "DPO"
    DISTILL = "DISTILL"
    REBEL = "REBEL"
    RKL = "RKL"


# Kinds that carry a beta * KL(pi || pi0) term; DPO and REBEL have none.
_REGULARIZED = frozenset({Kind.PMLE, Kind.DISTILL, Kind.RKL})


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Everything an objective needs besides the policy being scored.

    ``weighting`` only affects :attr:`Kind.RKL`: ``"context"`` averages over
    ``context_dist`` exactly, ``"dataset"`` averages over the prompts that
    appear in ``dataset`` (the empirical sum).
    """

    kind: Kind
    gamma: float = 0.0
    beta: float = 0.0
    eta: float = 1.0
    reference_policy: TabularPolicy | None = None
    reward: RewardTable | None = None
    dataset: PreferenceDataset | None = None
    context_dist: ContextDist | None = None
    weighting: str = "context"

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.gamma < 0 or self.beta < 0:
            raise ValueError("gamma and beta must be nonnegative")
        if kind is Kind.REBEL and not self.eta > 0:
            raise ValueError("REBEL needs eta > 0")
        if self.weighting not in ("context", "dataset"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if kind in (Kind.DISTILL, Kind.REBEL, Kind.RKL) and self.reward is None:
            raise ValueError(f"{kind.value} requires a reward table")
        if kind is not Kind.RKL or self.weighting == "dataset":
            if self.dataset is None:
                raise ValueError(f"{kind.value} requires a preference dataset")
            if len(self.dataset) == 0:
                raise ValueError("empty preference dataset")
        needs_ref = kind in (Kind.DPO, Kind.REBEL) or (self.beta > 0 and kind in _REGULARIZED)
        if needs_ref and self.reference_policy is None:
            raise ValueError(f"{kind.value} with beta={self.beta} requires a reference policy")
        shapes = {t.shape for t in (self.reference_policy, self.reward, self.dataset) if t is not None}
        if len(shapes) > 1:
            raise ValueError(f"inconsistent shapes in objective spec: {sorted(shapes)}")
        if self.context_dist is None:
            if not shapes:
                raise ValueError("cannot infer the number of contexts; pass context_dist")
            object.__setattr__(self, "context_dist", ContextDist.uniform(shapes.pop()[0]))
        elif shapes and self.context_dist.num_contexts != next(iter(shapes))[0]:
            raise ValueError("context distribution does not match the other tables")

    @property
    def num_contexts(self) -> int:
        return self.context_dist.num_contexts

    @cached_property
    def pair_weights(self) -> np.ndarray:
        return self.dataset.pair_weights()

    @cached_property
    def context_weights(self) -> np.ndarray:
        if self.kind is Kind.RKL and self.weighting == "dataset":
            return self.pair_weights.sum(axis=(1, 2))
        return self.context_dist.weights

    @cached_property
    def _ref_log(self) -> np.ndarray:
        return np.log(self.reference_policy.probs)

    @cached_property
    def _ref_margin(self) -> np.ndarray:
        lp0 = self._ref_log
        return lp0[:, :, None] - lp0[:, None, :]

    @cached_property
    def _reward_margin(self) -> np.ndarray:
        r = self.reward.values
        return r[:, :, None] - r[:, None, :]


def _log_margin(logp: np.ndarray) -> np.ndarray:
    return logp[:, :, None] - logp[:, None, :]


def _pair_loss(logp: np.ndarray, spec: ObjectiveSpec):
    """Per-pair loss and its derivative in the policy log-ratio, on the full grid."""
    delta = _log_margin(logp)
    g = spec.gamma
    if spec.kind is Kind.PMLE:
        m = g * delta
        return -log_expit(m), -g * expit(-m)
    if spec.kind is Kind.DPO:
        m = g * (delta - spec._ref_margin)
        return -log_expit(m), -g * expit(-m)
    if spec.kind is Kind.DISTILL:
        m = g * delta
        target = expit(spec._reward_margin)
        loss = (xlogy(target, target) + xlogy(1 - target, 1 - target)
                - target * log_expit(m) - (1 - target) * log_expit(-m))
        return loss, g * (expit(m) - target)
    if spec.kind is Kind.REBEL:
        resid = delta - spec._ref_margin - spec.eta * spec._reward_margin
        return resid ** 2, 2.0 * resid
    raise ValueError(f"{spec.kind} is not a pairwise objective")


def _kl_to_ref(probs: np.ndarray, logp: np.ndarray, spec: ObjectiveSpec) -> np.ndarray:
    return np.sum(probs * (logp - spec._ref_log), axis=1)


def _value_and_logit_grad(probs: np.ndarray, spec: ObjectiveSpec, need_grad: bool = True):
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    if spec.kind is Kind.RKL:
        w = spec.context_weights
        # Per-row objective is E_pi[g] with g = -R + gamma ln pi + beta (ln pi - ln pi0);
        # xlogy keeps 0 ln 0 = 0 for policies with exact zeros.
        neg_ent = xlogy(probs, probs).sum(axis=1)
        rows = -np.sum(probs * spec.reward.values, axis=1) + spec.gamma * neg_ent
        if spec.beta > 0:
            rows = rows + spec.beta * (neg_ent - np.sum(probs * spec._ref_log, axis=1))
        value = float(np.dot(w, rows))
        if not need_grad:
            return value, None
        g = -spec.reward.values + spec.gamma * logp
        if spec.beta > 0:
            g = g + spec.beta * (logp - spec._ref_log)
        return value, w[:, None] * probs * (g - rows[:, None])

    weights = spec.pair_weights
    with np.errstate(invalid="ignore"):
        loss, dloss = _pair_loss(logp, spec)
        value = float(np.sum(weights * loss))
    regularized = spec.beta > 0 and spec.kind in _REGULARIZED
    if regularized:
        kl = _kl_to_ref(probs, logp, spec)
        value += spec.beta * float(np.dot(spec.context_weights, kl))
    if not np.isfinite(value):
        raise FloatingPointError(f"{spec.kind.value} objective is not finite")
    if not need_grad:
        return value, None
    weighted = weights * dloss
    grad_logp = weighted.sum(axis=2) - weighted.sum(axis=1)
    grad = grad_logp - probs * grad_logp.sum(axis=1, keepdims=True)
    if regularized:
        w = spec.beta * spec.context_weights[:, None]
        grad = grad + w * probs * (logp - spec._ref_log - kl[:, None])
    return value, grad


def _require(spec: ObjectiveSpec, kind: Kind) -> None:
    if spec.kind is not kind:
        raise ValueError(f"expected a {kind.value} spec, got {spec.kind.value}")


def _check_policy(pi: TabularPolicy, spec: ObjectiveSpec) -> np.ndarray:
    if pi.num_contexts != spec.num_contexts:
        raise ValueError("policy shape does not match the objective spec")
    return pi.probs


def objective_value(pi: TabularPolicy, spec: ObjectiveSpec) -> float:
    return _value_and_logit_grad(_check_policy(pi, spec), spec, need_grad=False)[0]


def pmle_objective(pi: TabularPolicy, spec: ObjectiveSpec) -> float:
    """Mean preference negative log-likelihood plus ``beta * KL(pi || pi0)``."""
    _require(spec, Kind.PMLE)
    return objective_value(pi, spec)


def dpo_loss(pi: TabularPolicy, spec: ObjectiveSpec) -> float:
    _require(spec, Kind.DPO)
    return objective_value(pi, spec)


def distill_objective(pi: TabularPolicy, spec: ObjectiveSpec) -> float:
    """Mean Bernoulli KL from reward-implied preferences to the policy's own.

    Returned in pure KL form, so the realizable minimum is exactly zero.
    """
    _require(spec, Kind.DISTILL)
    return objective_value(pi, spec)


def rebel_loss(pi: TabularPolicy, spec: ObjectiveSpec) -> float:
    _require(spec, Kind.REBEL)
    return objective_value(pi, spec)


def rkl_objective(pi: TabularPolicy, spec: ObjectiveSpec) -> float:
    """``E_x[-E_pi R - gamma H(pi) + beta KL(pi || pi0)]``, computed exactly."""
    _require(spec, Kind.RKL)
    return objective_value(pi, spec)


def reward_nll(r: RewardTable, dataset: PreferenceDataset) -> float:
    """Mean logistic loss of the reward margins ``R(x, a+) - R(x, a-)``."""
    if len(dataset) == 0:
        raise ValueError("empty preference dataset")
    margins = r.values[dataset.contexts, dataset.preferred] - r.values[dataset.contexts, dataset.dispreferred]
    return float(-np.mean(log_expit(margins)))


def reward_nll_and_grad(values: np.ndarray, weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Reward NLL on pair weights, with its gradient in the reward entries."""
    margin = values[:, :, None] - values[:, None, :]
    value = float(-np.sum(weights * log_expit(margin)))
    h = weights * expit(-margin)
    return value, h.sum(axis=1) - h.sum(axis=2)


def objective_gradient(pi_logits: PolicyLogits, spec: ObjectiveSpec) -> np.ndarray:
    """Exact gradient of the spec's objective with respect to the logits."""
    probs = softmax_policy(pi_logits).probs
    if probs.shape[0] != spec.num_contexts:
        raise ValueError("logit shape does not match the objective spec")
    return _value_and_logit_grad(probs, spec)[1]


def value_and_gradient(pi_logits: PolicyLogits, spec: ObjectiveSpec) -> tuple[float, np.ndarray]:
    probs = softmax_policy(pi_logits).probs
    return _value_and_logit_grad(probs, spec)

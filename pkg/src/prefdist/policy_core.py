"""Tabular probability objects: policies, context distributions, rewards.

Everything here is an immutable wrapper around a small numpy array.  A
policy is a ``(num_contexts, num_actions)`` row-stochastic matrix; a reward
table has the same shape and remembers the tilt exponent it belongs to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, xlogy

PROB_FLOOR = 1e-12
ROW_SUM_TOL = 1e-12


class SupportError(ValueError):
    """Raised when a divergence is infinite because supports do not overlap."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def _floor_rows(probs: np.ndarray) -> np.ndarray:
    probs = np.maximum(probs, PROB_FLOOR)
    return probs / probs.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ContextDist:
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(np.atleast_1d(self.weights))
        if w.ndim != 1 or w.size < 1:
            raise ValueError("context weights must be a nonempty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("context weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"context weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, num_contexts: int) -> "ContextDist":
        if num_contexts < 1:
            raise ValueError("need at least one context")
        return cls(np.full(num_contexts, 1.0 / num_contexts))

    @classmethod
    def point_mass(cls, num_contexts: int, index: int) -> "ContextDist":
        w = np.zeros(num_contexts)
        w[index] = 1.0
        return cls(w)

    @property
    def num_contexts(self) -> int:
        return self.weights.size


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Row-stochastic ``|X| x |A|`` matrix of conditional action probabilities.

    The raw constructor only validates, so degenerate rows such as ``(1, 0)``
    are representable.  Use :meth:`from_probs` (or any of the module's
    constructors) to get a floored, strictly positive policy.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2 or 0 in p.shape:
            raise ValueError(f"policy must be a nonempty 2-d array, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("policy entries must be finite and nonnegative")
        err = np.abs(p.sum(axis=1) - 1.0).max()
        if err > ROW_SUM_TOL:
            raise ValueError(f"policy rows must sum to 1 (max deviation {err:.3g})")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_probs(cls, probs) -> "TabularPolicy":
        """Clamp entries to the probability floor and renormalize each row."""
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim == 1:
            p = p[None, :]
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        return cls(_floor_rows(p / p.sum(axis=1, keepdims=True)))

    @classmethod
    def uniform(cls, num_contexts: int, num_actions: int) -> "TabularPolicy":
        return cls(np.full((num_contexts, num_actions), 1.0 / num_actions))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def num_contexts(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    def to_logits(self) -> "PolicyLogits":
        if np.any(self.probs == 0):
            raise ValueError("policy has zero entries; logits would be infinite")
        return PolicyLogits(np.log(self.probs))


@dataclass(frozen=True, eq=False)
class PolicyLogits:
    logits: np.ndarray

    def __post_init__(self):
        z = _frozen(self.logits)
        if z.ndim != 2 or 0 in z.shape:
            raise ValueError(f"logits must be a nonempty 2-d array, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", z)

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape


@dataclass(frozen=True, eq=False)
class RewardTable:
    values: np.ndarray
    gamma: float

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or 0 in v.shape:
            raise ValueError(f"reward table must be a nonempty 2-d array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("reward values must be finite")
        if not self.gamma > 0:
            raise ValueError("reward gamma must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def centered(self, mu: TabularPolicy) -> "RewardTable":
        """Subtract the per-context mean under ``mu``."""
        _check_shapes(self.values, mu.probs)
        mean = np.sum(mu.probs * self.values, axis=1, keepdims=True)
        return RewardTable(self.values - mean, self.gamma)


def _check_shapes(*arrays: np.ndarray) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")


def softmax_policy(logits: PolicyLogits) -> TabularPolicy:
    z = logits.logits if isinstance(logits, PolicyLogits) else PolicyLogits(logits).logits
    return TabularPolicy(_floor_rows(np.exp(log_softmax(z, axis=1))))


def random_softmax_policy(num_contexts: int, num_actions: int, logit_std: float,
                          rng: np.random.Generator) -> TabularPolicy:
    """Each row is the softmax of i.i.d. ``N(0, logit_std**2)`` logits."""
    if num_contexts < 1 or num_actions < 1:
        raise ValueError("need at least one context and one action")
    if logit_std < 0:
        raise ValueError("logit_std must be nonnegative")
    z = rng.normal(0.0, 1.0, size=(num_contexts, num_actions)) * logit_std
    return softmax_policy(PolicyLogits(z))


def _row_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    bad = (p > 0) & (q == 0)
    if np.any(bad):
        raise SupportError("KL divergence is infinite: p has mass where q has none")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(p, p) - xlogy(p, np.where(q > 0, q, 1.0))
    return terms.sum(axis=1)


def policy_forward_kl(p: TabularPolicy, q: TabularPolicy, d: ContextDist) -> float:
    """``E_{x~d}[KL(p(x) || q(x))]``.  Contexts with zero weight are ignored."""
    _check_shapes(p.probs, q.probs)
    if d.num_contexts != p.num_contexts:
        raise ValueError("context distribution does not match policy shape")
    live = d.weights > 0
    kl = _row_kl(p.probs[live], q.probs[live])
    return float(max(np.dot(d.weights[live], kl), 0.0))


def row_entropy(probs: np.ndarray) -> np.ndarray:
    return -xlogy(probs, probs).sum(axis=1)


def policy_entropy(p: TabularPolicy, d: ContextDist) -> float:
    if d.num_contexts != p.num_contexts:
        raise ValueError("context distribution does not match policy shape")
    return float(np.dot(d.weights, row_entropy(p.probs)))


def centered_reward_table(pi: TabularPolicy, mu: TabularPolicy, gamma: float) -> RewardTable:
    """The reward ``gamma * ln pi`` minus its per-context mean under ``mu``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if np.any(pi.probs <= 0):
        raise ValueError("policy has zero entries; its log-reward is undefined")
    _check_shapes(pi.probs, mu.probs)
    return RewardTable(gamma * np.log(pi.probs), gamma).centered(mu)


def induced_policy_from_reward(r: RewardTable) -> TabularPolicy:
    """Policy proportional to ``exp(R / gamma)`` in every context."""
    return TabularPolicy(_floor_rows(np.exp(log_softmax(r.values / r.gamma, axis=1))))

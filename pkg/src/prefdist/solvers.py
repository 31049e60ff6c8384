"""Policy and reward optimizers for the tabular setting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import log_softmax

from .objectives import ObjectiveSpec, reward_nll_and_grad, value_and_gradient
from .policy_core import (
    PolicyLogits,
    RewardTable,
    TabularPolicy,
    _floor_rows,
)
from .preference import PreferenceDataset

ARMIJO_C = 1e-4
MAX_HALVINGS = 60


class DivergenceError(RuntimeError):
    """Gradient descent blew up; the learning rate is too large."""


@dataclass(frozen=True)
class GdConfig:
    """Full-batch gradient descent settings.

    With ``backtracking`` on, each step starts from the last accepted step
    size (doubled, capped at ``learning_rate``) and halves until the objective
    decreases.  A raw, un-backtracked step whose objective is non-finite or
    above ``divergence_cap`` raises :class:`DivergenceError`.  ``max_move``
    caps the largest coordinate change of a backtracked step; without it a
    long first step can saturate the softmax, where gradients vanish.
    """

    learning_rate: float = 100.0
    max_steps: int = 5000
    grad_tol: float = 1e-9
    divergence_cap: float = 1e6
    backtracking: bool = True
    max_move: float = 1.0

    def __post_init__(self):
        for name in ("learning_rate", "grad_tol", "divergence_cap", "max_move"):
            if not getattr(self, name) > 0:
                raise ValueError(f"GdConfig.{name} must be positive")
        if self.max_steps < 1:
            raise ValueError("GdConfig.max_steps must be positive")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "max_steps": self.max_steps,
            "grad_tol": self.grad_tol,
            "divergence_cap": self.divergence_cap,
            "backtracking": self.backtracking,
            "max_move": self.max_move,
        }


def _descend(x0: np.ndarray, fun: Callable, cfg: GdConfig,
             project: Callable | None = None) -> tuple[np.ndarray, list[float]]:
    """Projected gradient descent; ``fun`` returns ``(value, gradient)``.

    Stops when the gradient mapping ``|x - P(x - lr g)|_inf / lr`` falls to
    ``grad_tol``.  Without a projection that is just ``|g|_inf``.
    """
    x = x0
    f, g = fun(x)
    trace = [f]
    lr = cfg.learning_rate
    for _ in range(cfg.max_steps):
        if not project and np.max(np.abs(g)) <= cfg.grad_tol:
            break
        step = min(2.0 * lr, cfg.learning_rate) if cfg.backtracking else cfg.learning_rate
        x_new = x - step * g
        if project:
            x_new = project(x_new)
        f_new, g_new = fun(x_new)
        if not math.isfinite(f_new) or f_new > cfg.divergence_cap:
            raise DivergenceError(
                f"objective reached {f_new:.6g} (cap {cfg.divergence_cap:g}) with step size {step:g}")
        if cfg.backtracking:
            g_inf = np.max(np.abs(g))
            if step * g_inf > cfg.max_move:
                step = cfg.max_move / g_inf
                x_new = x - step * g
                if project:
                    x_new = project(x_new)
                f_new, g_new = fun(x_new)
            for _ in range(MAX_HALVINGS):
                moved = np.sum((x_new - x) ** 2)
                if f_new <= f - ARMIJO_C * moved / step:
                    break
                step *= 0.5
                x_new = x - step * g
                if project:
                    x_new = project(x_new)
                f_new, g_new = fun(x_new)
            else:
                break
            if f_new > f:
                break
        lr = step
        moved_inf = np.max(np.abs(x_new - x))
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if project and moved_inf / step <= cfg.grad_tol:
            break
    return x, trace


def gd_minimize(start: PolicyLogits, spec: ObjectiveSpec,
                cfg: GdConfig) -> tuple[TabularPolicy, list[float]]:
    """Minimize the spec's objective over free logits, starting at ``start``."""

    def fun(z):
        return value_and_gradient(PolicyLogits(z), spec)

    z, trace = _descend(np.array(start.logits), fun, cfg)
    return TabularPolicy(_floor_rows(np.exp(log_softmax(z, axis=1)))), trace


def analytic_tilt_solution(pi0: TabularPolicy, r: RewardTable, beta: float,
                           gamma: float) -> TabularPolicy:
    """Exact minimizer of the regularized reverse-KL objective.

    Row-wise ``pi ~ pi0**alpha * exp(R / (beta + gamma))`` with
    ``alpha = beta / (beta + gamma)``; ``gamma = 0`` is the RLHF solution.
    """
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be nonnegative")
    temp = beta + gamma
    if not temp > 0:
        raise ValueError("beta + gamma must be positive")
    if pi0.shape != r.shape:
        raise ValueError(f"shape mismatch: pi0 {pi0.shape} vs reward {r.shape}")
    alpha = beta / temp
    z = r.values / temp
    if alpha > 0:
        z = z + alpha * np.log(pi0.probs)
    return TabularPolicy(_floor_rows(np.exp(log_softmax(z, axis=1))))


def project_centered_box(values: np.ndarray, mu: np.ndarray, bound: float) -> np.ndarray:
    """Euclidean projection of each row onto ``{v : mu . v = 0, |v| <= bound}``.

    The projection is ``clip(u - lam * mu, -bound, bound)`` where ``lam`` zeroes
    the piecewise-linear, nonincreasing map ``s(lam) = mu . v(lam)``; it is
    found exactly by evaluating ``s`` at its breakpoints and interpolating.
    ``mu`` must be strictly positive.
    """
    u = values
    # The centered unconstrained projection wins whenever it already fits the box.
    mean = np.sum(mu * u, axis=1, keepdims=True) / np.sum(mu * mu, axis=1, keepdims=True)
    v = u - mean * mu
    inside = np.all(np.abs(v) <= bound, axis=1)
    if np.all(inside):
        return v
    rows = ~inside
    ur, mr = u[rows], mu[rows]
    knots = np.sort(np.concatenate([(ur - bound) / mr, (ur + bound) / mr], axis=1), axis=1)
    s = np.sum(mr[:, None, :] * np.clip(ur[:, None, :] - knots[:, :, None] * mr[:, None, :],
                                        -bound, bound), axis=2)
    # s runs from +bound*sum(mu) at the first knot down to -bound*sum(mu) at the last.
    k = np.argmax(s <= 0, axis=1)
    idx = np.arange(len(k))
    lo_k, hi_k = knots[idx, k - 1], knots[idx, k]
    lo_s, hi_s = s[idx, k - 1], s[idx, k]
    frac = np.where(lo_s > hi_s, lo_s / np.where(lo_s > hi_s, lo_s - hi_s, 1.0), 0.0)
    lam = lo_k + frac * (hi_k - lo_k)
    v[rows] = np.clip(ur - lam[:, None] * mr, -bound, bound)
    return v


def train_reward_model(dataset: PreferenceDataset, gamma: float, r_max: float, cfg: GdConfig,
                       mu: TabularPolicy | None = None) -> RewardTable:
    """Tabular logistic reward fit, kept centered under ``mu`` and in ``[-gamma r_max, gamma r_max]``.

    ``mu`` defaults to uniform; the projection runs after every step.
    """
    if len(dataset) == 0:
        raise ValueError("empty preference dataset")
    if not r_max > 0 or not gamma > 0:
        raise ValueError("r_max and gamma must be positive")
    shape = dataset.shape
    mu_probs = TabularPolicy.uniform(*shape).probs if mu is None else mu.probs
    if mu_probs.shape != shape:
        raise ValueError(f"shape mismatch: mu {mu_probs.shape} vs dataset {shape}")
    weights = dataset.pair_weights()
    bound = gamma * r_max

    values, _ = _descend(
        np.zeros(shape),
        lambda v: reward_nll_and_grad(v, weights),
        cfg,
        project=lambda v: project_centered_box(v, mu_probs, bound),
    )
    return RewardTable(values, gamma)


@dataclass(frozen=True, eq=False)
class FinitePolicyClass:
    members: tuple[TabularPolicy, ...]
    contains_target: bool = False

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("policy class must be nonempty")
        if len({m.shape for m in members}) != 1:
            raise ValueError("policy class members must share a shape")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i: int) -> TabularPolicy:
        return self.members[i]

    def with_member(self, pi: TabularPolicy, contains_target: bool | None = None) -> "FinitePolicyClass":
        flag = self.contains_target if contains_target is None else contains_target
        return FinitePolicyClass(self.members + (pi,), flag)


def finite_class_argmin(cls: FinitePolicyClass | Sequence[TabularPolicy],
                        loss: Callable[[TabularPolicy], float]) -> tuple[TabularPolicy, int]:
    """Member with the smallest finite loss; ties go to the lowest index."""
    members = list(cls)
    if not members:
        raise ValueError("policy class must be nonempty")
    losses = np.array([loss(m) for m in members], dtype=np.float64)
    finite = np.isfinite(losses)
    if not finite.any():
        raise ValueError("every member of the policy class has a non-finite loss")
    idx = int(np.argmin(np.where(finite, losses, np.inf)))
    return members[idx], idx

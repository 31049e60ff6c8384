"""Numerical verifiers for the analytic inequalities behind the rate guarantees.

Each ``check_*`` function evaluates an inequality on a grid or on random
instances and returns a :class:`CheckReport`.  ``worst_margin`` is the
smallest value of ``rhs - lhs`` (oriented so that a negative number means a
violation), before the absolute slack is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, log_softmax

from .policy_core import RewardTable, TabularPolicy, _floor_rows
from .solvers import analytic_tilt_solution

SLACK = 1e-12
_SERIES_CUTOFF = 1e-3


@dataclass(frozen=True)
class CheckReport:
    name: str
    instances_tested: int
    violations: int
    worst_margin: float
    worst_instance: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "instances_tested": self.instances_tested,
                "violations": self.violations, "worst_margin": self.worst_margin,
                "worst_instance": self.worst_instance}


def _psi_array(r: np.ndarray) -> np.ndarray:
    t = np.log(r)
    out = np.empty_like(t)
    small = np.abs(t) < _SERIES_CUTOFF
    ts = t[small]
    # (e^t - 1 - t) / t^2 = 1/2 + t/6 + t^2/24 + t^3/120 + ...
    out[small] = 0.5 + ts * (1 / 6 + ts * (1 / 24 + ts * (1 / 120 + ts / 720)))
    tl = t[~small]
    out[~small] = (np.expm1(tl) - tl) / tl ** 2
    return out


def psi_value(r: float, limit: bool = False) -> float:
    """``psi(r) = (r - 1 - ln r) / (ln r)^2``.

    ``psi(1)`` is undefined unless ``limit`` is set, in which case the
    continuous extension ``1/2`` is returned.
    """
    if not r > 0:
        raise ValueError("psi is only defined for r > 0")
    if r == 1:
        if not limit:
            raise ValueError("psi(1) is 0/0; pass limit=True for the continuous extension")
        return 0.5
    return float(_psi_array(np.array([float(r)]))[0])


def _report(name: str, margins: np.ndarray, describe) -> CheckReport:
    if margins.size == 0:
        raise ValueError(f"{name}: nothing to check")
    violations = int(np.count_nonzero(margins < -SLACK))
    worst = int(np.argmin(margins))
    return CheckReport(name, int(margins.size), violations, float(margins[worst]), describe(worst))


def check_sigmoid_gap(grid: Sequence[tuple[float, float]], constant: float = 0.25) -> CheckReport:
    """``|sigmoid(a) - sigmoid(b)| >= constant * exp(-max(|a|, |b|)) * |a - b|``.

    ``constant`` exists so tests can corrupt the bound and watch it fail.
    """
    pts = np.asarray(grid, dtype=np.float64).reshape(-1, 2)
    if pts.size == 0:
        raise ValueError("empty grid")
    if not np.all(np.isfinite(pts)):
        raise ValueError("grid points must be finite")
    a, b = pts[:, 0], pts[:, 1]
    lhs = np.abs(expit(a) - expit(b))
    rhs = constant * np.exp(-np.maximum(np.abs(a), np.abs(b))) * np.abs(a - b)
    return _report("sigmoid_gap", lhs - rhs, lambda i: f"a={a[i]!r}, b={b[i]!r}")


def square_grid(lo: float, hi: float, points_per_axis: int) -> np.ndarray:
    axis = np.linspace(lo, hi, points_per_axis)
    aa, bb = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([aa.ravel(), bb.ravel()])


def _bregman_log(r: np.ndarray) -> np.ndarray:
    """``r - 1 - ln r``, accurate near ``r = 1``."""
    t = np.log(r)
    return np.expm1(t) - t


def check_log_square_bounds(r_min: float, r_max: float, grid_size: int) -> CheckReport:
    """Sandwich ``r - 1 - ln r`` between multiples of ``(ln r)^2`` on ``[r_min, r_max]``.

    Upper: ``r - 1 - ln r <= max(1/2, psi(r_max)) (ln r)^2`` for ``r <= r_max``.
    Lower: ``r - 1 - ln r >= (ln r)^2 / (e max(ln(1/r_min), 1))`` for ``r >= r_min``.
    The grid is log-spaced and always contains ``r = 1``.
    """
    if not (0 < r_min < 1 < r_max):
        raise ValueError("need 0 < r_min < 1 < r_max")
    if grid_size < 1:
        raise ValueError("grid_size must be positive")
    r = np.unique(np.append(np.geomspace(r_min, r_max, grid_size), 1.0))
    sq = np.log(r) ** 2
    body = _bregman_log(r)
    upper_coef = max(0.5, psi_value(r_max))
    lower_coef = 1.0 / (math.e * max(math.log(1.0 / r_min), 1.0))
    margins = np.concatenate([upper_coef * sq - body, body - lower_coef * sq])
    m = r.size

    def describe(i):
        side = "upper" if i < m else "lower"
        return f"{side} bound at r={r[i % m]!r}"

    return _report("log_square_bounds", margins, describe)


def kl_comparability_constant(r_bound: float) -> float:
    """``(4R v 1) e^(8R + 1) / R^2``, the reverse-to-forward KL conversion factor."""
    if not r_bound > 0:
        raise ValueError("r_bound must be positive")
    return max(4 * r_bound, 1.0) * math.exp(8 * r_bound + 1) / r_bound ** 2


def bounded_ratio_pair(num_contexts: int, num_actions: int, r_bound: float,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two policies with logits uniform on ``[-R, R]``.

    Logit gaps are at most ``2R`` and log-normalizers differ by at most ``2R``,
    so every probability ratio lies in ``[e^{-4R}, e^{4R}]``.
    """
    shape = (num_contexts, num_actions)
    za = rng.uniform(-r_bound, r_bound, size=shape)
    zb = rng.uniform(-r_bound, r_bound, size=shape)
    return np.exp(log_softmax(za, axis=1)), np.exp(log_softmax(zb, axis=1))


def check_kl_comparability(instances: int, r_bound: float, rng: np.random.Generator,
                           num_contexts: int = 10, num_actions: int = 10) -> CheckReport:
    """``E_x KL(pi_hat || pi*) <= C(R) E_x KL(pi* || pi_hat)`` on random bounded pairs."""
    if instances < 1:
        raise ValueError("need at least one instance")
    const = kl_comparability_constant(r_bound)
    margins = np.empty(instances)
    for i in range(instances):
        p_star, p_hat = bounded_ratio_pair(num_contexts, num_actions, r_bound, rng)
        ratio = np.log(p_star) - np.log(p_hat)
        forward = np.mean(np.sum(p_star * ratio, axis=1))
        reverse = np.mean(np.sum(-p_hat * ratio, axis=1))
        margins[i] = const * forward - reverse
    return _report("kl_comparability", margins, lambda i: f"instance {i}, R={r_bound!r}")


def check_psi_monotone(lo: float = 1.0 + 1e-6, hi: float = 1e4, grid_size: int = 100_000) -> CheckReport:
    """``psi`` is nondecreasing along an increasing log-spaced sequence in ``(1, hi]``."""
    if not 1 < lo < hi:
        raise ValueError("need 1 < lo < hi")
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    r = np.geomspace(lo, hi, grid_size)
    vals = _psi_array(r)
    diffs = np.diff(vals)
    return _report("psi_monotone", diffs, lambda i: f"psi({r[i]!r}) > psi({r[i + 1]!r})")


def prior_smoothing_solutions(p0: TabularPolicy, r: RewardTable, beta: float,
                              gamma: float) -> tuple[TabularPolicy, TabularPolicy, float]:
    """RLHF and reverse-KL closed forms at the shared temperature ``beta + gamma``.

    Returns ``(rlhf_policy, rkl_policy, alpha)`` with ``alpha = beta / (beta + gamma)``:
    RLHF tilts ``p0`` while reverse KL tilts the flattened prior ``p0**alpha``.
    """
    if beta < 0 or gamma < 0 or not beta + gamma > 0:
        raise ValueError("need beta, gamma >= 0 and beta + gamma > 0")
    temp = beta + gamma
    alpha = beta / temp
    rlhf = TabularPolicy(_floor_rows(np.exp(log_softmax(np.log(p0.probs) + r.values / temp, axis=1))))
    rkl = analytic_tilt_solution(p0, r, beta, gamma)
    return rlhf, rkl, alpha

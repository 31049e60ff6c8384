"""Evaluation quantities: coverage coefficients, rate fits, trial aggregates."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import linregress

from .policy_core import ContextDist, TabularPolicy, centered_reward_table

NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "points_used": self.points_used}


def coverage_coefficient(cls: Iterable[TabularPolicy], pi_star: TabularPolicy, mu: TabularPolicy,
                         d: ContextDist, gamma: float) -> float:
    """Generalized coverage coefficient of a policy class; ``math.inf`` if unbounded.

    For each member the ratio of ``E_{x~d, a~pi_star}[dR^2]`` to
    ``E_{x~d, a~mu}[dR^2]`` is taken, with ``dR`` the difference of centered
    rewards against ``pi_star``.  A ``0/0`` ratio counts as zero.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if pi_star.shape != mu.shape or d.num_contexts != mu.num_contexts:
        raise ValueError("pi_star, mu and d must agree in shape")
    ref = centered_reward_table(pi_star, mu, gamma).values
    w = d.weights[:, None]
    worst = 0.0
    for member in cls:
        if member.shape != mu.shape:
            raise ValueError("policy class member has the wrong shape")
        sq = (centered_reward_table(member, mu, gamma).values - ref) ** 2
        num = float(np.sum(w * pi_star.probs * sq))
        den = float(np.sum(w * mu.probs * sq))
        if den > 0:
            worst = max(worst, num / den)
        elif num > 0:
            return math.inf
    return worst


def fit_loglog_slope(pairs: Sequence[tuple[float, float]], noise_floor: float = NOISE_FLOOR) -> RateFit:
    """Least-squares line through ``(ln n, ln err)``; errors at or below the floor are dropped."""
    usable = [(float(n), float(e)) for n, e in pairs if n > 0 and e > noise_floor and math.isfinite(e)]
    if len({n for n, _ in usable}) < 2:
        raise ValueError(f"need at least 2 usable points with distinct n, got {len(usable)}")
    ln_n, ln_e = np.log(np.array(usable)).T
    res = linregress(ln_n, ln_e)
    # A flat line leaves no variance to explain; report r^2 = 0 rather than nan.
    r2 = 0.0 if np.ptp(ln_e) == 0 else float(res.rvalue) ** 2
    return RateFit(float(res.slope), float(res.intercept), min(max(r2, 0.0), 1.0), len(usable))


@dataclass(frozen=True)
class TrialStats:
    mean: float
    std: float
    count: int


def aggregate_trials(results: Sequence, keys: tuple[str, ...] = ("method", "n"),
                     field: str = "forward_kl") -> dict[tuple, TrialStats]:
    """Group results by ``keys`` and report the mean and population std of ``field``."""
    if not results:
        raise ValueError("no trial results to aggregate")
    groups: dict[tuple, list[float]] = defaultdict(list)
    for res in results:
        groups[tuple(getattr(res, k) for k in keys)].append(getattr(res, field))
    out = {}
    for key in sorted(groups):
        vals = groups[key]
        out[key] = TrialStats(statistics.mean(vals), statistics.pstdev(vals), len(vals))
    return out

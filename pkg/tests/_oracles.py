"""Independent reference computations shared by the unit and acceptance tests."""

import itertools

import numpy as np

from prefdist import (
    ContextDist,
    Kind,
    ObjectiveSpec,
    PolicyLogits,
    RewardTable,
    objective_value,
    random_softmax_policy,
    sample_dataset,
    softmax_policy,
)


def fd_gradient(fun, z: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a matrix."""
    grad = np.zeros_like(z)
    for idx in itertools.product(*map(range, z.shape)):
        up, down = z.copy(), z.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (fun(up) - fun(down)) / (2 * h)
    return grad


def logit_objective(spec: ObjectiveSpec):
    return lambda z: objective_value(softmax_policy(PolicyLogits(z)), spec)


def random_spec(kind: Kind, rng: np.random.Generator, shape=(3, 4), n: int = 200) -> ObjectiveSpec:
    """A fully populated spec of the given kind with random ingredients."""
    num_contexts, num_actions = shape
    pi_star = random_softmax_policy(num_contexts, num_actions, 1.0, rng)
    pi0 = random_softmax_policy(num_contexts, num_actions, 1.0, rng)
    d = ContextDist(rng.dirichlet(np.ones(num_contexts)))
    gamma = float(rng.uniform(0.2, 2.0))
    ds = sample_dataset(d, pi0, pi_star, gamma, n, rng)
    reward = RewardTable(rng.normal(size=shape), gamma)
    beta = float(rng.uniform(0.0, 1.5))
    return ObjectiveSpec(
        kind, gamma=gamma, beta=beta, eta=float(rng.uniform(0.2, 2.0)), reference_policy=pi0,
        reward=reward, dataset=ds, context_dist=d,
        weighting="dataset" if kind is Kind.RKL and rng.random() < 0.5 else "context",
    )


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def brute_projection(u: np.ndarray, mu: np.ndarray, bound: float, iters: int = 200) -> np.ndarray:
    """Row-wise projection onto the centered box by plain bisection on the multiplier."""
    out = np.empty_like(u)
    for i, (row, w) in enumerate(zip(u, mu)):
        lo, hi = -1e6, 1e6
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if np.dot(w, np.clip(row - mid * w, -bound, bound)) > 0:
                lo = mid
            else:
                hi = mid
        out[i] = np.clip(row - 0.5 * (lo + hi) * w, -bound, bound)
    return out

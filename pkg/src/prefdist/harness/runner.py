"""Trial pipeline, sweeps over the (method, n, beta, seed) grid, and the theory suite."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..metrics import RateFit, TrialStats, aggregate_trials, fit_loglog_slope
from ..objectives import Kind, ObjectiveSpec, objective_value
from ..policy_core import (
    ContextDist,
    RewardTable,
    TabularPolicy,
    centered_reward_table,
    policy_forward_kl,
    random_softmax_policy,
)
from ..preference import PreferenceDataset, sample_dataset
from ..solvers import (
    FinitePolicyClass,
    analytic_tilt_solution,
    finite_class_argmin,
    gd_minimize,
    train_reward_model,
)
from ..theory_checks import (
    CheckReport,
    check_kl_comparability,
    check_log_square_bounds,
    check_psi_monotone,
    check_sigmoid_gap,
    square_grid,
)
from .config import REWARD_METHODS, ExperimentConfig

log = logging.getLogger(__name__)

# Independent RNG streams derived from a trial seed.
_STREAM_INSTANCE, _STREAM_DATA, _STREAM_CLASS = 0, 1, 2


class CellError(RuntimeError):
    def __init__(self, method: str, n: int, beta: float, seed: int, cause: BaseException):
        super().__init__(f"cell (method={method}, n={n}, beta={beta!r}, seed={seed}) failed: {cause}")
        self.method, self.n, self.beta, self.seed = method, n, beta, seed
        self.cause = cause


@dataclass(frozen=True)
class TrialResult:
    method: str
    n: int
    beta: float
    seed: int
    forward_kl: float
    reverse_kl: float
    train_objective: float
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"method": self.method, "n": self.n, "beta": self.beta, "seed": self.seed,
                "forward_kl": self.forward_kl, "reverse_kl": self.reverse_kl,
                "train_objective": self.train_objective, "wall_time": self.wall_time}

    @property
    def sort_key(self):
        return (self.method, self.n, self.beta, self.seed)


@dataclass(frozen=True)
class CellFailure:
    method: str
    n: int
    beta: float
    seed: int
    error: str

    def to_dict(self) -> dict:
        return {"method": self.method, "n": self.n, "beta": self.beta, "seed": self.seed,
                "error": self.error}


@dataclass
class SweepResult:
    config: ExperimentConfig
    trials: list[TrialResult]
    best_beta_per_cell: dict[tuple[str, int], float] = field(default_factory=dict)
    best_stats: dict[tuple[str, int], TrialStats] = field(default_factory=dict)
    rate_fits: dict[str, RateFit] = field(default_factory=dict)
    check_reports: list[CheckReport] = field(default_factory=list)
    failures: list[CellFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def best_curve(self, method: str) -> list[tuple[int, float]]:
        return [(n, s.mean) for (m, n), s in sorted(self.best_stats.items()) if m == method]


@dataclass(frozen=True, eq=False)
class Instance:
    pi_star: TabularPolicy
    pi0: TabularPolicy
    mu: TabularPolicy
    d: ContextDist


def make_instance(cfg: ExperimentConfig, seed: int) -> Instance:
    """Target, reference and response policies for a seed; independent of n and beta."""
    rng = np.random.default_rng([seed, _STREAM_INSTANCE])
    shape = (cfg.num_contexts, cfg.num_actions)
    pi_star = random_softmax_policy(*shape, cfg.logit_std, rng)
    pi0 = random_softmax_policy(*shape, cfg.logit_std, rng)
    mu = {"reference": pi0, "uniform": TabularPolicy.uniform(*shape), "target": pi_star}[cfg.mu_mode]
    return Instance(pi_star, pi0, mu, ContextDist.uniform(cfg.num_contexts))


def make_dataset(cfg: ExperimentConfig, inst: Instance, n: int, seed: int) -> PreferenceDataset:
    rng = np.random.default_rng([seed, _STREAM_DATA, n])
    return sample_dataset(inst.d, inst.mu, inst.pi_star, cfg.gamma, n, rng, seed=seed)


def make_policy_class(cfg: ExperimentConfig, inst: Instance, seed: int) -> FinitePolicyClass:
    """``class_size`` random members followed by the target itself."""
    rng = np.random.default_rng([seed, _STREAM_CLASS])
    members = [random_softmax_policy(cfg.num_contexts, cfg.num_actions, cfg.logit_std, rng)
               for _ in range(cfg.class_size)]
    return FinitePolicyClass(tuple(members) + (inst.pi_star,), contains_target=True)


def split_for_stages(cfg: ExperimentConfig, ds: PreferenceDataset) -> tuple[PreferenceDataset, PreferenceDataset]:
    """``(reward data, policy data)``: the same set, or the two halves with ``split_data``."""
    if not cfg.split_data:
        return ds, ds
    half = len(ds) // 2
    return ds.subset(0, half), ds.subset(half, len(ds))


def fit_reward(cfg: ExperimentConfig, inst: Instance, reward_ds: PreferenceDataset) -> RewardTable:
    if cfg.use_true_reward:
        return centered_reward_table(inst.pi_star, inst.mu, cfg.gamma)
    return train_reward_model(reward_ds, cfg.gamma, cfg.r_max, cfg.reward_solver, mu=inst.mu)


def build_spec(cfg: ExperimentConfig, inst: Instance, method: str, beta: float,
               policy_ds: PreferenceDataset, reward: RewardTable | None) -> ObjectiveSpec:
    common = dict(reference_policy=inst.pi0, context_dist=inst.d)
    if method in ("PMLE", "DPO"):
        return ObjectiveSpec(Kind(method), gamma=cfg.gamma, beta=beta if method == "PMLE" else 0.0,
                             dataset=policy_ds, **common)
    if method == "DISTILL":
        return ObjectiveSpec(Kind.DISTILL, gamma=cfg.gamma, beta=beta, reward=reward,
                             dataset=policy_ds, **common)
    if method == "REBEL":
        return ObjectiveSpec(Kind.REBEL, gamma=cfg.gamma, eta=cfg.rebel_eta, reward=reward,
                             dataset=policy_ds, **common)
    # RLHF is reverse KL with the entropy weight switched off.
    gamma = cfg.gamma if method == "RKL" else 0.0
    ds = policy_ds if cfg.rkl_weighting == "dataset" else None
    return ObjectiveSpec(Kind.RKL, gamma=gamma, beta=beta, reward=reward, dataset=ds,
                         weighting=cfg.rkl_weighting, **common)


def solve(cfg: ExperimentConfig, inst: Instance, spec: ObjectiveSpec,
          policy_class: FinitePolicyClass | None) -> TabularPolicy:
    if cfg.policy_mode == "finite_class":
        best, _ = finite_class_argmin(policy_class, lambda pi: objective_value(pi, spec))
        return best
    if spec.kind is Kind.RKL:
        return analytic_tilt_solution(inst.pi0, spec.reward, spec.beta, spec.gamma)
    policy, _ = gd_minimize(inst.pi0.to_logits(), spec, cfg.solver)
    return policy


def _evaluate(cfg, inst, method, n, beta, seed, policy_ds, reward, policy_class, started) -> TrialResult:
    spec = build_spec(cfg, inst, method, beta, policy_ds, reward)
    pi_hat = solve(cfg, inst, spec, policy_class)
    forward = policy_forward_kl(inst.pi_star, pi_hat, inst.d)
    reverse = policy_forward_kl(pi_hat, inst.pi_star, inst.d)
    wall = time.perf_counter() - started if cfg.record_timing else 0.0
    return TrialResult(method, int(n), float(beta), int(seed), forward, reverse,
                       objective_value(pi_hat, spec), wall)


def run_trial(cfg: ExperimentConfig, method: str, n: int, beta: float, seed: int) -> TrialResult:
    """One cell of the sweep, computed from scratch."""
    if method not in cfg.methods:
        raise ValueError(f"method {method!r} is not in the config's methods {list(cfg.methods)}")
    started = time.perf_counter()
    inst = make_instance(cfg, seed)
    reward_ds, policy_ds = split_for_stages(cfg, make_dataset(cfg, inst, n, seed))
    reward = fit_reward(cfg, inst, reward_ds) if method in REWARD_METHODS else None
    policy_class = make_policy_class(cfg, inst, seed) if cfg.policy_mode == "finite_class" else None
    return _evaluate(cfg, inst, method, n, beta, seed, policy_ds, reward, policy_class, started)


def _run_seed(cfg: ExperimentConfig, seed: int) -> tuple[list[TrialResult], list[CellFailure]]:
    """All cells for one seed, sharing the instance, datasets and reward fits."""
    trials, failures = [], []
    inst = make_instance(cfg, seed)
    policy_class = make_policy_class(cfg, inst, seed) if cfg.policy_mode == "finite_class" else None
    needs_reward = any(m in REWARD_METHODS for m in cfg.methods)
    for n in cfg.n_values:
        started = time.perf_counter()
        try:
            reward_ds, policy_ds = split_for_stages(cfg, make_dataset(cfg, inst, n, seed))
            reward = fit_reward(cfg, inst, reward_ds) if needs_reward else None
        except Exception as exc:  # noqa: BLE001 - every cell of this n fails the same way
            for method in cfg.methods:
                for beta in cfg.beta_grid:
                    failures.append(CellFailure(method, n, beta, seed, f"{type(exc).__name__}: {exc}"))
            continue
        shared = time.perf_counter() - started
        for method in cfg.methods:
            for beta in cfg.beta_grid:
                t0 = time.perf_counter() - shared
                try:
                    trials.append(_evaluate(cfg, inst, method, n, beta, seed, policy_ds,
                                            reward if method in REWARD_METHODS else None,
                                            policy_class, t0))
                except Exception as exc:  # noqa: BLE001 - recorded, the sweep continues
                    log.warning("%s", CellError(method, n, beta, seed, exc))
                    failures.append(CellFailure(method, n, beta, seed, f"{type(exc).__name__}: {exc}"))
    return trials, failures


def _run_seed_star(args):
    return _run_seed(*args)


def summarize(cfg: ExperimentConfig, trials: list[TrialResult]):
    """Best beta per (method, n) by seed-mean forward KL, and rate fits on those curves."""
    best_beta, best_stats, fits = {}, {}, {}
    if not trials:
        return best_beta, best_stats, fits
    by_beta = aggregate_trials(trials, keys=("method", "n", "beta"))
    for (method, n, beta), stats in by_beta.items():
        cur = best_stats.get((method, n))
        if cur is None or stats.mean < cur.mean:
            best_beta[(method, n)] = beta
            best_stats[(method, n)] = stats
    for method in cfg.methods:
        curve = [(n, s.mean) for (m, n), s in sorted(best_stats.items()) if m == method]
        try:
            fits[method] = fit_loglog_slope(curve)
        except ValueError:
            log.info("no rate fit for %s: too few usable points", method)
    return best_beta, best_stats, fits


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """Run every cell; output order is canonical regardless of ``jobs``."""
    seeds = sorted(cfg.seeds)
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_seed_star, [(cfg, s) for s in seeds]))
    else:
        parts = [_run_seed(cfg, s) for s in seeds]
    trials = sorted((t for part, _ in parts for t in part), key=lambda t: t.sort_key)
    failures = sorted((f for _, part in parts for f in part),
                      key=lambda f: (f.method, f.n, f.beta, f.seed))
    best_beta, best_stats, fits = summarize(cfg, trials)
    reports = verify_theory_suite() if cfg.theory_checks else []
    return SweepResult(cfg, trials, best_beta, best_stats, fits, reports, failures)


def verify_theory_suite(sigmoid_points_per_axis: int = 101, log_grid_size: int = 100_000,
                        kl_instances: int = 10_000, r_bound: float = 0.5, psi_grid_size: int = 100_000,
                        seed: int = 0, sigmoid_constant: float = 0.25) -> list[CheckReport]:
    """Run every inequality check at its default size.

    ``sigmoid_constant`` is a test hook for corrupting one bound.
    """
    if sigmoid_points_per_axis < 1:
        raise ValueError("empty sigmoid grid")
    return [
        check_sigmoid_gap(square_grid(-10.0, 10.0, sigmoid_points_per_axis), constant=sigmoid_constant),
        check_log_square_bounds(np.exp(-4.0), np.exp(4.0), log_grid_size),
        check_kl_comparability(kl_instances, r_bound, np.random.default_rng(seed)),
        check_psi_monotone(grid_size=psi_grid_size),
    ]

"""Experiment configuration and its JSON form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..solvers import GdConfig

METHODS = ("PMLE", "DPO", "DISTILL", "REBEL", "RKL", "RLHF")
REWARD_METHODS = frozenset({"DISTILL", "REBEL", "RKL", "RLHF"})
MU_MODES = ("reference", "uniform", "target")
POLICY_MODES = ("free_logits", "finite_class")


class ConfigError(ValueError):
    pass


def _default_betas() -> list[float]:
    return [float(b) for b in np.logspace(-4, 1, 20)]


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: every (method, n, beta, seed) cell is a trial.

    Defaults reproduce the 10-context, 10-action toy comparison of RLHF and
    reverse KL.  ``eta`` of ``None`` means ``1 / gamma`` for REBEL.
    """

    num_contexts: int = 10
    num_actions: int = 10
    logit_std: float = 0.1
    gamma: float = 0.5
    methods: tuple[str, ...] = ("RKL", "RLHF")
    n_values: tuple[int, ...] = tuple(2 ** k for k in range(5, 17))
    beta_grid: tuple[float, ...] = field(default_factory=lambda: tuple(_default_betas()))
    seeds: tuple[int, ...] = tuple(range(10))
    mu_mode: str = "reference"
    policy_mode: str = "free_logits"
    class_size: int = 64
    solver: GdConfig = GdConfig(learning_rate=400.0, max_steps=5000, grad_tol=1e-9)
    reward_solver: GdConfig = GdConfig(learning_rate=400.0, max_steps=2000, grad_tol=1e-8)
    r_max: float = 20.0
    eta: float | None = None
    rkl_weighting: str = "context"
    split_data: bool = False
    use_true_reward: bool = False
    record_timing: bool = False
    theory_checks: bool = True
    output_dir: str = "results"

    def __post_init__(self):
        for name in ("methods", "n_values", "beta_grid", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        self.validate()

    def validate(self) -> None:
        if self.num_contexts < 1 or self.num_actions < 1:
            raise ConfigError("num_contexts and num_actions must be positive")
        if self.logit_std < 0:
            raise ConfigError("logit_std must be nonnegative")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods contain duplicates")
        if not self.n_values:
            raise ConfigError("n_values must be nonempty")
        if any(n < 0 for n in self.n_values) or any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ConfigError("n_values must be nonnegative and strictly increasing")
        if not self.beta_grid or any(b < 0 for b in self.beta_grid):
            raise ConfigError("beta_grid must be nonempty and nonnegative")
        if len(set(self.beta_grid)) != len(self.beta_grid):
            raise ConfigError("beta_grid contains duplicates")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds contain duplicates")
        if self.mu_mode not in MU_MODES:
            raise ConfigError(f"mu_mode must be one of {list(MU_MODES)}")
        if self.policy_mode not in POLICY_MODES:
            raise ConfigError(f"policy_mode must be one of {list(POLICY_MODES)}")
        if self.class_size < 0:
            raise ConfigError("class_size must be nonnegative")
        if not self.r_max > 0:
            raise ConfigError("r_max must be positive")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.rkl_weighting not in ("context", "dataset"):
            raise ConfigError("rkl_weighting must be 'context' or 'dataset'")

    @property
    def rebel_eta(self) -> float:
        return 1.0 / self.gamma if self.eta is None else self.eta

    def to_dict(self) -> dict:
        out = asdict(self)
        for name in ("methods", "n_values", "beta_grid", "seeds"):
            out[name] = list(out[name])
        out["solver"] = self.solver.to_dict()
        out["reward_solver"] = self.reward_solver.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = dict(data)
        for name in ("solver", "reward_solver"):
            if name in kwargs:
                kwargs[name] = _gd_from_dict(name, kwargs[name])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig.from_dict(data)


def _gd_from_dict(name: str, data) -> GdConfig:
    if isinstance(data, GdConfig):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a JSON object")
    known = {f.name for f in fields(GdConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {name} keys: {unknown}")
    try:
        return GdConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()

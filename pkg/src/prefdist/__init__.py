"""Alignment as distribution learning from pairwise preferences, at tabular scale."""

from .objectives import Kind, ObjectiveSpec, objective_gradient, objective_value
from .policy_core import (
    ContextDist,
    PolicyLogits,
    RewardTable,
    SupportError,
    TabularPolicy,
    centered_reward_table,
    induced_policy_from_reward,
    policy_entropy,
    policy_forward_kl,
    random_softmax_policy,
    softmax_policy,
)
from .preference import PreferenceDataset, PreferenceTriple, bt_prob, sample_dataset
from .solvers import (
    DivergenceError,
    FinitePolicyClass,
    GdConfig,
    analytic_tilt_solution,
    finite_class_argmin,
    gd_minimize,
    train_reward_model,
)

__version__ = "0.1.0"

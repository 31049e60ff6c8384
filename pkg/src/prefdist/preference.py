"""Tilted Bradley-Terry preferences and synthetic preference datasets.

Under the tilted model a context ``x`` and two responses ``a, b`` give

    P_pi(a > b | x) = pi(a|x)**gamma / (pi(a|x)**gamma + pi(b|x)**gamma)
                    = sigmoid(gamma * (ln pi(a|x) - ln pi(b|x))).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from scipy.special import expit

from .policy_core import ContextDist, TabularPolicy


class PreferenceTriple(NamedTuple):
    context: int
    preferred: int
    dispreferred: int


def _tilted_margin(gamma: float, pa, pb):
    """``gamma * ln(pa / pb)``, with the ``gamma = 0`` case pinned to zero."""
    pa = np.asarray(pa, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    if np.any((pa == 0) & (pb == 0)):
        raise ValueError("both responses have zero probability; preference is undefined")
    if gamma == 0:
        return np.zeros(np.broadcast(pa, pb).shape)
    with np.errstate(divide="ignore"):
        return gamma * (np.log(pa) - np.log(pb))


def bt_prob(pi: TabularPolicy, gamma: float, x: int, a: int, b: int) -> float:
    """Probability that ``a`` is preferred to ``b`` in context ``x``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return float(expit(_tilted_margin(gamma, pi.probs[x, a], pi.probs[x, b])))


def bt_prob_many(pi: TabularPolicy, gamma: float, x, a, b) -> np.ndarray:
    """Vectorized :func:`bt_prob` over index arrays."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return expit(_tilted_margin(gamma, pi.probs[x, a], pi.probs[x, b]))


@dataclass(frozen=True, eq=False)
class PreferenceDataset:
    """Ordered preference triples stored column-wise.

    The label is implicit in the ordering: ``preferred[i]`` beat
    ``dispreferred[i]`` in context ``contexts[i]``.
    """

    contexts: np.ndarray
    preferred: np.ndarray
    dispreferred: np.ndarray
    num_contexts: int
    num_actions: int
    gamma_used: float = float("nan")
    generator_seed: int | None = None

    def __post_init__(self):
        cols = []
        for arr in (self.contexts, self.preferred, self.dispreferred):
            arr = np.array(arr, dtype=np.int64, copy=True).reshape(-1)
            arr.setflags(write=False)
            cols.append(arr)
        if not len(cols[0]) == len(cols[1]) == len(cols[2]):
            raise ValueError("triple columns have different lengths")
        if len(cols[0]):
            if cols[0].min() < 0 or cols[0].max() >= self.num_contexts:
                raise ValueError("context index out of range")
            for col in cols[1:]:
                if col.min() < 0 or col.max() >= self.num_actions:
                    raise ValueError("action index out of range")
        for name, col in zip(("contexts", "preferred", "dispreferred"), cols):
            object.__setattr__(self, name, col)

    @classmethod
    def from_triples(cls, triples, num_contexts: int, num_actions: int, **kwargs) -> "PreferenceDataset":
        arr = np.asarray(list(triples), dtype=np.int64).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], num_contexts, num_actions, **kwargs)

    def __len__(self) -> int:
        return len(self.contexts)

    def __iter__(self) -> Iterator[PreferenceTriple]:
        for x, a, b in zip(self.contexts.tolist(), self.preferred.tolist(), self.dispreferred.tolist()):
            yield PreferenceTriple(x, a, b)

    @property
    def n(self) -> int:
        return len(self)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_contexts, self.num_actions)

    @cached_property
    def pair_counts(self) -> np.ndarray:
        """``W[x, a, b]`` = number of triples where ``a`` beat ``b`` in ``x``."""
        w = np.zeros((self.num_contexts, self.num_actions, self.num_actions))
        np.add.at(w, (self.contexts, self.preferred, self.dispreferred), 1.0)
        w.setflags(write=False)
        return w

    def pair_weights(self) -> np.ndarray:
        """Pair counts divided by ``n``, so that sums over them are dataset means."""
        if len(self) == 0:
            raise ValueError("empty preference dataset")
        return self.pair_counts / len(self)

    def subset(self, start: int, stop: int) -> "PreferenceDataset":
        return PreferenceDataset(
            self.contexts[start:stop], self.preferred[start:stop], self.dispreferred[start:stop],
            self.num_contexts, self.num_actions, self.gamma_used, self.generator_seed,
        )


def sample_dataset(d: ContextDist, mu: TabularPolicy, pi_star: TabularPolicy, gamma: float,
                   n: int, rng: np.random.Generator, seed: int | None = None) -> PreferenceDataset:
    """Draw ``n`` i.i.d. triples: ``x ~ d``, ``a, b ~ mu(x)``, label from ``pi_star``.

    ``seed`` is only recorded on the dataset; randomness comes from ``rng``.
    """
    if mu.shape != pi_star.shape:
        raise ValueError(f"shape mismatch: mu {mu.shape} vs pi_star {pi_star.shape}")
    if d.num_contexts != mu.num_contexts:
        raise ValueError("context distribution does not match policy shape")
    if n < 0:
        raise ValueError("n must be nonnegative")
    num_contexts, num_actions = mu.shape
    x = rng.choice(num_contexts, size=n, p=d.weights)
    cdf = np.cumsum(mu.probs, axis=1)
    cdf[:, -1] = 1.0
    u_a, u_b, u_pref = rng.random(n), rng.random(n), rng.random(n)
    a = _inverse_cdf(cdf[x], u_a)
    b = _inverse_cdf(cdf[x], u_b)
    a_wins = u_pref < bt_prob_many(pi_star, gamma, x, a, b)
    return PreferenceDataset(
        x, np.where(a_wins, a, b), np.where(a_wins, b, a), num_contexts, num_actions,
        gamma_used=float(gamma), generator_seed=seed,
    )


def _inverse_cdf(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    return (u[:, None] >= cdf_rows).sum(axis=1).astype(np.int64)


def save_dataset(ds: PreferenceDataset, path) -> tuple[Path, Path]:
    """Write ``<path>`` as CSV (``x,a_plus,a_minus``) and ``<path>.json`` as metadata."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "a_plus", "a_minus"])
        writer.writerows(ds)
    sidecar = path.with_name(path.name + ".json")
    meta = {
        "gamma": ds.gamma_used,
        "seed": ds.generator_seed,
        "n": len(ds),
        "shapes": {"num_contexts": ds.num_contexts, "num_actions": ds.num_actions},
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, sidecar


def load_dataset(path) -> PreferenceDataset:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x", "a_plus", "a_minus"]:
            raise ValueError(f"unexpected dataset header {header!r}")
        rows = [tuple(int(v) for v in row) for row in reader]
    if len(rows) != meta["n"]:
        raise ValueError(f"sidecar says n={meta['n']} but CSV has {len(rows)} rows")
    return PreferenceDataset.from_triples(
        rows, meta["shapes"]["num_contexts"], meta["shapes"]["num_actions"],
        gamma_used=meta["gamma"], generator_seed=meta["seed"],
    )

"""Differential-privacy primitives.

Laplace noise, the exponential mechanism over arm scores, the binary-tree
continual counter and level-dependent ("geometric") privacy budgets.
Logarithms are natural unless a name says otherwise.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidInputError

PrivateCounter = kernels.DyadicCounter
dyadic_nodes = kernels.dyadic_nodes


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float = 1.0
    epsilon0: float = 0.01
    geometric: bool = False
    delta_f: float = 1.0
    sigma: float = 0.1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be > 0")
        if not self.epsilon0 > 0:
            raise InvalidInputError("epsilon0 must be > 0")
        if not 0 < self.sigma < 1:
            raise InvalidInputError("sigma must be in (0, 1)")
        if not self.delta_f > 0:
            raise InvalidInputError("delta_f must be > 0")


def sample_laplace(scale, rng):
    if not scale > 0:
        raise InvalidInputError("Laplace scale must be > 0")
    return float(rng.laplace(0.0, scale))


def exp_mechanism_probs(scores, epsilon, delta_u):
    """Selection probabilities ``p_k ~ exp(epsilon * score_k / (2 * delta_u))``."""
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InvalidInputError("scores must be a non-empty vector")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("scores must be finite")
    if not epsilon > 0 or not delta_u > 0:
        raise InvalidInputError("epsilon and delta_u must be > 0")
    z = (epsilon / (2.0 * delta_u)) * (s - s.max())
    w = np.exp(z)
    return w / w.sum()


def exp_mechanism_sample(probs, rng):
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("probabilities must be a non-empty vector")
    if np.any(p < 0):
        raise InvalidInputError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("probabilities must sum to 1")
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"))
    # skip zero-mass entries that searchsorted can land on at the far end
    idx = min(idx, p.size - 1)
    while p[idx] == 0 and idx > 0:
        idx -= 1
    return idx


def counter_scale(horizon, epsilon_tree):
    """Per-node Laplace scale giving ``epsilon_tree``-DP over the whole stream.

    One leaf sits under ``log2(horizon) + 1`` nodes (itself included), which
    is the L1 sensitivity of the flattened tree.
    """
    if not epsilon_tree > 0:
        raise InvalidInputError("epsilon_tree must be > 0")
    h = 1
    while h < horizon:
        h <<= 1
    return h.bit_length() / epsilon_tree


def noise_bound_gamma(params, T, theta, epsilon=None):
    """High-probability bound on the total noise in a tree-counter prefix sum.

    ``theta * ln(T)**2 * ln(theta * T * ln(T) / sigma) / epsilon``.
    """
    if T < 2:
        raise InvalidInputError("T must be >= 2")
    if theta < 1:
        raise InvalidInputError("theta must be >= 1")
    eps = params.epsilon if epsilon is None else epsilon
    lt = math.log(T)
    return theta * lt * lt * math.log(theta * T * lt / params.sigma) / eps


def epsilon_for_level(params, m, alpha, level):
    if not params.geometric:
        return params.epsilon
    if level < 0:
        raise InvalidInputError("level must be >= 0")
    return params.epsilon0 * float(m) ** (alpha * level)


class BudgetLedger:
    """Privacy budget spent per requester tree.

    Trees belonging to one requester hold disjoint reward streams, so their
    charge is the maximum over those trees; distinct requesters compose
    sequentially and their charges add up.
    """

    def __init__(self):
        self._charges = defaultdict(dict)

    def charge(self, requester, tree_key, epsilon):
        cur = self._charges[requester].get(tree_key, 0.0)
        self._charges[requester][tree_key] = max(cur, epsilon)

    def spent_by(self, requester):
        trees = self._charges.get(requester)
        return max(trees.values()) if trees else 0.0

    def total_spent(self):
        return sum(self.spent_by(r) for r in self._charges)

    def requesters(self):
        return sorted(self._charges)

"""Per-learner bandit state machine.

A :class:`Learner` plays two roles. For its own users it runs the phase
cascade of :meth:`Learner.decide`: explore own videos, train peers, explore
peers, then exploit (exponential mechanism over own videos in private
modes). For contexts forwarded by peers it runs :meth:`Learner.serve_peer_request`,
which picks one of its own videos and releases reward feedback only through
a binary-tree counter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

from . import kernels
from .errors import InvalidInputError
from .partition import PartitionTree, SubspaceId
from .privacy import (BudgetLedger, PrivacyParams, PrivateCounter, counter_scale,
                      epsilon_for_level, noise_bound_gamma)

MODES = ("DAP", "P-DAP", "GP-DAP", "DUP", "CAP")
PRIVATE_MODES = ("P-DAP", "GP-DAP")


@dataclass
class LearnerConfig:
    learner_id: int
    own_videos: list
    peer_ids: list = field(default_factory=list)
    L: float = 1.0
    alpha: float = 1.0
    m: int = 2
    d: int = 2
    A: float = 1.0
    p: float = 4.0
    T: int = 50_000
    privacy: PrivacyParams = field(default_factory=PrivacyParams)
    mode: str = "DAP"
    control_log: str = "current"
    # multipliers on the log term of G1/G2/G3 and on the noise term of G2
    explore_scale: float = 1.0
    gamma_scale: float = 1.0
    base_level: int = 0

    def __post_init__(self):
        if len(self.own_videos) < 1:
            raise InvalidInputError("a learner needs at least one own video")
        if not 0 < self.alpha <= 1:
            raise InvalidInputError("alpha must be in (0, 1]")
        if self.L <= 0:
            raise InvalidInputError("L must be > 0")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.control_log not in ("current", "horizon"):
            raise InvalidInputError("control_log must be 'current' or 'horizon'")
        if self.T < 1:
            raise InvalidInputError("T must be >= 1")
        if self.explore_scale <= 0 or self.gamma_scale < 0:
            raise InvalidInputError("explore_scale must be > 0 and gamma_scale >= 0")
        if self.mode == "GP-DAP" and not self.privacy.geometric:
            self.privacy = replace(self.privacy, geometric=True)

    @property
    def K(self):
        return len(self.own_videos)

    @property
    def private(self):
        return self.mode in PRIVATE_MODES

    @property
    def geometric(self):
        return self.mode == "GP-DAP"


class ActionKind(Enum):
    RECOMMEND_OWN = "recommend_own"
    TRAIN_PEER = "train_peer"
    EXPLORE_PEER = "explore_peer"
    EXPLOIT_PEER = "exploit_peer"
    EXPLOIT_OWN = "exploit_own"

    @property
    def to_peer(self):
        return self in (ActionKind.TRAIN_PEER, ActionKind.EXPLORE_PEER, ActionKind.EXPLOIT_PEER)


@dataclass(frozen=True)
class Action:
    """Outcome of the cascade. ``arm`` indexes own videos or the peer list."""

    kind: ActionKind
    arm: int

    @property
    def to_peer(self):
        return self.kind.to_peer

    @property
    def observes_reward(self):
        return self.kind is not ActionKind.TRAIN_PEER


@dataclass(frozen=True)
class PeerFeedback:
    """What crosses the learner boundary: a noisy running sum and its length."""

    noisy_sum: float
    count: int

    @property
    def mean(self):
        return self.noisy_sum / self.count


def _log_term(t, cfg):
    if cfg.control_log == "horizon":
        return math.log(cfg.T)
    return math.log(t)


def control_g1(t, level, cfg):
    if t < 1:
        raise InvalidInputError("t must be >= 1")
    return cfg.explore_scale * float(cfg.m) ** (2 * cfg.alpha * level) * _log_term(t, cfg)


def control_g2(t, level, cfg, gamma):
    return control_g1(t, level, cfg) + cfg.gamma_scale * gamma / 4.0 * float(cfg.m) ** (cfg.alpha * level)


def control_g3(t, level, cfg):
    return control_g1(t, level, cfg) / cfg.K


def sensitivity_delta_u(cfg, level):
    if level < 0:
        raise InvalidInputError("level must be >= 0")
    return cfg.L * float(cfg.m) ** (-cfg.alpha * level)


class CellStats:
    """Counters and sample means of one learner inside one subspace."""

    __slots__ = ("own_n", "own_sum", "own_mean", "peer_n", "peer_train", "peer_mean")

    def __init__(self, K, n_peers):
        self.own_n = [0] * K
        self.own_sum = [0.0] * K
        self.own_mean = [0.0] * K
        self.peer_n = [0] * n_peers
        self.peer_train = [0] * n_peers
        self.peer_mean = [0.0] * n_peers

    def record_own(self, k, reward):
        n = self.own_n[k] + 1
        self.own_n[k] = n
        s = self.own_sum[k] + reward
        self.own_sum[k] = s
        self.own_mean[k] = s / n


def _clamp01(v):
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


class Learner:
    def __init__(self, cfg: LearnerConfig, counter_rng=None):
        self.cfg = cfg
        self.id = cfg.learner_id
        self.K = cfg.K
        self.n_peers = len(cfg.peer_ids)
        self.tree = PartitionTree(cfg.m, cfg.d, cfg.A, cfg.p,
                                  base_level=cfg.base_level, frozen=cfg.mode == "DUP")
        self.stats: dict[SubspaceId, CellStats] = {}
        # server side: one counter per (requester, requester-side subspace)
        self.counters: dict[tuple, PrivateCounter] = {}
        self.budget = BudgetLedger()
        self._counter_rng = counter_rng
        self._gamma_cache: dict[int, float] = {}
        self._level_cache: dict[int, tuple] = {}
        self._t_cache = (0, 0.0)

    # -- helpers -----------------------------------------------------------

    def cell_stats(self, c: SubspaceId) -> CellStats:
        st = self.stats.get(c)
        if st is None:
            st = self.stats[c] = CellStats(self.K, self.n_peers)
        return st

    def locate(self, x: Sequence[float]) -> SubspaceId:
        return self.tree.locate(x)

    def epsilon_at(self, level):
        return epsilon_for_level(self.cfg.privacy, self.cfg.m, self.cfg.alpha, level)

    def gamma(self, level):
        """Noise envelope folded into G2 (zero when peer feedback is exact)."""
        cfg = self.cfg
        if not cfg.private or self.n_peers == 0 or cfg.T < 2:
            return 0.0
        key = level if cfg.geometric else -1
        g = self._gamma_cache.get(key)
        if g is None:
            g = noise_bound_gamma(cfg.privacy, cfg.T, self.n_peers, self.epsilon_at(level))
            self._gamma_cache[key] = g
        return g

    def _log_t(self, t):
        if self._t_cache[0] != t:
            self._t_cache = (t, _log_term(t, self.cfg))
        return self._t_cache[1]

    def _level_consts(self, level):
        # (m^{2 alpha l}, m^{alpha l}, exp-mechanism coefficient eps/(2 du))
        lc = self._level_cache.get(level)
        if lc is None:
            cfg = self.cfg
            sq = float(cfg.m) ** (2 * cfg.alpha * level)
            lin = float(cfg.m) ** (cfg.alpha * level)
            coef = self.epsilon_at(level) / (2.0 * sensitivity_delta_u(cfg, level)) if cfg.private else 0.0
            g2_extra = cfg.gamma_scale * self.gamma(level) / 4.0 * lin
            lc = self._level_cache[level] = (sq, coef, g2_extra)
        return lc

    def thresholds(self, t, level):
        """Exploration thresholds (own, peer training, peer exploration, serving).

        Each is floored at 1 so that an untried arm is always tried first.
        """
        sq, _, g2_extra = self._level_consts(level)
        g1 = self.cfg.explore_scale * sq * self._log_t(t)
        return (max(g1, 1.0), max(g1, 1.0), max(g1 + g2_extra, 1.0), max(g1 / self.K, 1.0))

    # -- own users -----------------------------------------------------------

    def select_action_own(self, x, t, rng) -> Action:
        return self.decide(self.locate(x), t, rng)

    def decide(self, c: SubspaceId, t: int, rng) -> Action:
        st = self.cell_stats(c)
        g1, train_budget, g2, _ = self.thresholds(t, c.level)
        k = kernels.first_below(st.own_n, g1)
        if k >= 0:
            return Action(ActionKind.RECOMMEND_OWN, k)
        if self.n_peers:
            j = kernels.first_below(st.peer_train, train_budget)
            if j >= 0:
                return Action(ActionKind.TRAIN_PEER, j)
            j = kernels.first_below(st.peer_n, g2)
            if j >= 0:
                return Action(ActionKind.EXPLORE_PEER, j)
        return self._exploit(st, c.level, rng)

    def _exploit(self, st: CellStats, level, rng) -> Action:
        if self.cfg.private:
            coef = self._level_consts(level)[1]
            ki = kernels.exp_sample(st.own_mean, coef, rng.random())
        else:
            ki = kernels.argmax_first(st.own_mean)
        if self.n_peers:
            kj = kernels.argmax_first(st.peer_mean)
            if st.own_mean[ki] < _clamp01(st.peer_mean[kj]):
                return Action(ActionKind.EXPLOIT_PEER, kj)
        return Action(ActionKind.EXPLOIT_OWN, ki)

    def exploit_probs(self, c: SubspaceId):
        """Exponential-mechanism distribution over own videos in ``c``."""
        from .privacy import exp_mechanism_probs
        st = self.cell_stats(c)
        return exp_mechanism_probs(st.own_mean, self.epsilon_at(c.level),
                                   sensitivity_delta_u(self.cfg, c.level))

    def update_own(self, c: SubspaceId, action: Action, reward=None,
                   feedback: Optional[PeerFeedback] = None):
        """Fold one round's outcome into the stats of ``c`` and run the split check.

        Returns the children of ``c`` if it was split this round.
        """
        st = self.cell_stats(c)
        kind = action.kind
        if kind is ActionKind.TRAIN_PEER:
            st.peer_train[action.arm] += 1
        elif kind.to_peer:
            st.peer_n[action.arm] += 1
            if feedback is not None:
                # the released sum is cumulative, so it replaces the estimate
                st.peer_mean[action.arm] = feedback.mean
        else:
            if reward is None:
                raise InvalidInputError("own recommendations need an observed reward")
            st.record_own(action.arm, reward)
        return self._arrival(c)

    def _arrival(self, c):
        tree = self.tree
        if tree._record(c).value:
            children = tree.split(c)
            # children start from zeroed counters
            self.stats.pop(c, None)
            return children
        return None

    # -- forwarded users -------------------------------------------------------

    def serve_peer_request(self, requester, x, t, training, rng=None,
                           click: Callable[[int], int] = None, stream=None):
        """Serve a context forwarded by ``requester``.

        ``click(video)`` returns the user's 0/1 feedback. ``stream`` names the
        requester-side subspace the request comes from; one counter is kept per
        ``(requester, stream)``. Returns ``(video, feedback)`` where feedback is
        ``None`` for training requests.
        """
        if click is None:
            raise InvalidInputError("serve_peer_request needs a click source")
        c = self.locate(x)
        st = self.cell_stats(c)
        g3 = self.thresholds(t, c.level)[3]
        k = kernels.first_below(st.own_n, g3)
        if k < 0:
            k = kernels.argmax_first(st.own_mean)
        video = self.cfg.own_videos[k]
        f = click(video)
        st.record_own(k, f)

        if training:
            # the requester observes nothing, so nothing enters its stream
            return video, None
        counter = self._counter(requester, stream)
        counter.insert(f)
        n = counter.count
        return video, PeerFeedback(counter.prefix_sum(n), n)

    def _counter(self, requester, stream):
        key = (requester, stream)
        ctr = self.counters.get(key)
        if ctr is None:
            cfg = self.cfg
            if cfg.private:
                level = stream.level if isinstance(stream, SubspaceId) else 0
                eps_tree = self.epsilon_at(level) / max(1, self.n_peers)
                ctr = PrivateCounter(cfg.T, counter_scale(cfg.T, eps_tree), self._counter_rng)
                self.budget.charge(requester, stream, eps_tree)
            else:
                ctr = PrivateCounter(cfg.T, 0.0)
            self.counters[key] = ctr
        return ctr

"""Synchronous multi-learner rounds.

Learners never hold references to each other. Every forward goes through
:meth:`System.forward`, which builds a :class:`PeerRequest`, lets the
serving learner pick a video and returns only the feedback part of the
answer to the requester.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError, RunComplete
from .learner import Action, ActionKind, Learner, PeerFeedback


@dataclass(frozen=True, slots=True)
class PeerRequest:
    requester: int
    target: int
    x: tuple
    t: int
    training: bool
    stream: object = None


@dataclass(frozen=True, slots=True)
class RoundRecord:
    t: int
    learner: int
    slot: int
    x: tuple
    action: str
    arm: int
    server: int
    video: int
    click: int
    reward_seen: Optional[float]
    level: int
    cell: tuple

    def as_row(self):
        seen = "" if self.reward_seen is None else repr(self.reward_seen)
        return [self.t, self.learner, self.slot, " ".join(repr(float(c)) for c in self.x),
                self.action, self.arm, self.server, self.video, self.click, seen,
                self.level, ".".join(map(str, self.cell))]


LOG_COLUMNS = ["t", "learner", "slot", "x", "action", "arm", "server", "video",
               "click", "reward_seen", "level", "cell"]


class System:
    """M learners advancing in lockstep over ``T`` rounds.

    ``slots`` maps each arrival slot of a round to the learner that receives
    it; by default slot ``i`` belongs to learner ``i``. The centralised
    baseline uses a single learner for every slot.
    """

    def __init__(self, learners, model, T, seed=0, slots=None):
        self.learners: list[Learner] = list(learners)
        if not self.learners:
            raise InvalidInputError("a system needs at least one learner")
        for i, ln in enumerate(self.learners):
            if ln.id != i:
                raise InvalidInputError("learner ids must be 0..M-1 in order")
        self.model = model
        self.T = int(T)
        self.slots = list(range(len(self.learners))) if slots is None else list(slots)
        ss = np.random.SeedSequence(seed)
        click_ss, *learner_ss = ss.spawn(1 + len(self.learners))
        self.click_rng = np.random.default_rng(click_ss)
        self.rngs = [np.random.default_rng(s) for s in learner_ss]
        self.round = 0
        self.event_log: list[RoundRecord] = []
        self.forwards = 0
        self.server_updates = 0
        self._u = None
        self._last_click = None

    @property
    def M(self):
        return len(self.slots)

    def _click(self, video):
        f = int(self.click_rng.random() < self._u[video])
        self._last_click = f
        return f

    def forward(self, req: PeerRequest):
        """Deliver a request; returns ``(video, feedback)``.

        The video is used by the simulator for logging and metrics only; the
        requester is handed ``feedback`` alone.
        """
        server = self.learners[req.target]
        self.forwards += 1
        video, feedback = server.serve_peer_request(
            req.requester, req.x, req.t, req.training, self.rngs[req.target],
            click=self._click, stream=req.stream)
        self.server_updates += 1
        return video, feedback

    def run_round(self, arrivals):
        if self.round >= self.T:
            raise RunComplete(f"horizon {self.T} reached")
        if len(arrivals) != len(self.slots):
            raise InvalidInputError(f"expected {len(self.slots)} arrivals, got {len(arrivals)}")
        t = self.round + 1
        U = self.model.expected_rewards(np.asarray(arrivals, dtype=float))
        records = []
        for slot, i in enumerate(self.slots):
            ln = self.learners[i]
            x = tuple(float(v) for v in arrivals[slot])
            self._u = U[slot]
            c = ln.locate(x)
            action = ln.decide(c, t, self.rngs[i])
            reward, feedback, seen = None, None, None
            if action.to_peer:
                target = ln.cfg.peer_ids[action.arm]
                training = action.kind is ActionKind.TRAIN_PEER
                video, feedback = self.forward(
                    PeerRequest(i, target, x, t, training, c))
                # the click happens at the serving side; the requester only
                # sees what the feedback envelope carries
                click = self._last_click
                server = target
                if feedback is not None:
                    seen = feedback.mean
            else:
                video = ln.cfg.own_videos[action.arm]
                click = reward = self._click(video)
                server = i
                seen = float(reward)
            if action.to_peer:
                ln.update_own(c, action, feedback=feedback)
            else:
                ln.update_own(c, action, reward=reward)
            rec = RoundRecord(t, i, slot, x, action.kind.value, action.arm, server,
                              video, click, seen, c.level, c.cell)
            records.append(rec)
        self.event_log.extend(records)
        self.round = t
        return records

    def run_simulation(self, stream, T=None):
        """Run ``T`` rounds (default: the remaining horizon) from ``stream``.

        ``stream`` is an ``(n_rounds, M, d)`` array or an iterable yielding one
        list of M contexts per round.
        """
        T = self.T - self.round if T is None else int(T)
        if T < 0:
            raise InvalidInputError("T must be >= 0")
        it = iter(stream)
        for _ in range(T):
            try:
                arrivals = next(it)
            except StopIteration:
                raise InvalidInputError("context stream exhausted before the horizon") from None
            self.run_round(arrivals)
        return self.event_log

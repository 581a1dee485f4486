import sys
from collections import Counter
from dataclasses import fields

import numpy as np
import pytest

from dpbandit.cooperation import LOG_COLUMNS, PeerRequest, System
from dpbandit.environment import ContextGenerator, RewardModel
from dpbandit.errors import InvalidInputError, RunComplete
from dpbandit.learner import ActionKind, Learner, LearnerConfig
from dpbandit.partition import SubspaceId
from dpbandit.privacy import PrivacyParams


def build(M=4, K=3, T=50, mode="DAP", seed=0, learner_cls=Learner, **kw):
    model = RewardModel.random(M * K, 2, np.random.default_rng(seed))
    learners = []
    for i in range(M):
        cfg = LearnerConfig(learner_id=i, own_videos=list(range(i * K, (i + 1) * K)),
                            peer_ids=[j for j in range(M) if j != i], T=T, mode=mode, **kw)
        learners.append(learner_cls(cfg, counter_rng=np.random.default_rng(100 + i)))
    return System(learners, model, T, seed=seed)


def stream(T, M, seed=0):
    return ContextGenerator(d=2).sample(T * M, np.random.default_rng(seed)).reshape(T, M, 2)


def test_record_count_and_order():
    s = build(M=4, T=10)
    log = s.run_simulation(stream(10, 4))
    assert len(log) == 40
    assert [(r.t, r.learner) for r in log] == sorted((r.t, r.learner) for r in log)


def test_zero_rounds():
    s = build(T=5)
    assert s.run_simulation(stream(5, 4), T=0) == []


def test_horizon_and_stream_errors():
    s = build(M=2, T=3)
    with pytest.raises(InvalidInputError):
        s.run_simulation(stream(2, 2), T=3)
    s = build(M=2, T=2)
    s.run_simulation(stream(2, 2))
    with pytest.raises(RunComplete):
        s.run_round(stream(1, 2)[0])
    with pytest.raises(InvalidInputError):
        build(M=2, T=2).run_round(stream(1, 3)[0])


def test_single_learner_never_forwards():
    s = build(M=1, T=200, explore_scale=0.1)
    log = s.run_simulation(stream(200, 1))
    assert {r.action for r in log} <= {"recommend_own", "exploit_own"}
    assert s.forwards == 0


def test_training_advances_server_not_requester():
    s = build(M=2, K=2, T=10, A=1e6)
    req, srv = s.learners
    # finish own exploration so learner 0 trains its peer next
    st = req.cell_stats(SubspaceId(0, (0, 0)))
    st.own_n[:] = [10 ** 6] * 2
    srv_before = sum(srv.cell_stats(SubspaceId(0, (0, 0))).own_n)
    recs = s.run_round([[0.5, 0.5], [0.5, 0.5]])
    assert recs[0].action == "train_peer" and recs[0].reward_seen is None
    assert recs[0].click in (0, 1)
    assert st.peer_mean == [0.0] and st.peer_n == [0] and st.peer_train == [1]
    # the server saw two arrivals: its own user and the forwarded one
    assert sum(srv.cell_stats(SubspaceId(0, (0, 0))).own_n) == srv_before + 2


def test_deterministic_replay():
    rows = []
    for _ in range(2):
        s = build(T=300, mode="P-DAP", privacy=PrivacyParams(epsilon=0.5), explore_scale=0.05,
                  gamma_scale=0.001)
        rows.append([r.as_row() for r in s.run_simulation(stream(300, 4, seed=5))])
    assert rows[0] == rows[1]
    assert len(rows[0][0]) == len(LOG_COLUMNS)


def test_conservation():
    s = build(T=400, explore_scale=0.05)
    log = s.run_simulation(stream(400, 4, seed=1))
    peer = [r for r in log if r.action in ("train_peer", "explore_peer", "exploit_peer")]
    assert s.forwards == s.server_updates == len(peer)
    assert all(r.server != r.learner for r in peer)
    assert all((r.reward_seen is None) == (r.action == "train_peer") for r in log)
    # the server's own stats absorbed one pull per forward plus its own users
    pulls = sum(sum(st.own_n) for ln in s.learners for st in ln.stats.values())
    assert pulls <= 400 * 4 + len(peer)
    # requester-side peer counters grow only on non-training forwards
    counted = sum(sum(st.peer_n) for ln in s.learners for st in ln.stats.values())
    trained = sum(sum(st.peer_train) for ln in s.learners for st in ln.stats.values())
    actions = Counter(r.action for r in peer)
    assert counted <= actions["explore_peer"] + actions["exploit_peer"]
    assert trained <= actions["train_peer"]


class AuditedLearner(Learner):
    """Records any attribute read made from inside another learner's methods."""

    violations = []

    def __getattribute__(self, name):
        frame = sys._getframe(1)
        caller = frame.f_locals.get("self")
        if isinstance(caller, Learner) and caller is not self:
            AuditedLearner.violations.append((caller.id, object.__getattribute__(self, "id"), name))
        return super().__getattribute__(name)


def test_isolation_audit():
    AuditedLearner.violations = []
    s = build(T=200, mode="P-DAP", privacy=PrivacyParams(epsilon=1.0), explore_scale=0.05,
              gamma_scale=0.0005, learner_cls=AuditedLearner)
    log = s.run_simulation(stream(200, 4, seed=2))
    assert any(r.action != "recommend_own" for r in log)
    assert s.forwards > 0
    assert AuditedLearner.violations == []
    # no learner holds a reference to another learner
    for ln in s.learners:
        for v in vars(ln).values():
            assert not isinstance(v, Learner)


def test_feedback_envelope_hides_video():
    s = build(M=2, K=2, T=5)
    req = PeerRequest(0, 1, (0.5, 0.5), 1, False, SubspaceId(0, (0, 0)))
    s._u = s.model.expected_rewards(np.array([0.5, 0.5]))
    video, fb = s.forward(req)
    assert video in (2, 3)
    assert [f.name for f in fields(fb)] == ["noisy_sum", "count"]
    assert fb.count == 1


def test_budget_per_tree():
    eps = 0.9
    s = build(M=4, T=300, mode="P-DAP", privacy=PrivacyParams(epsilon=eps), explore_scale=0.02,
              gamma_scale=0.0002)
    s.run_simulation(stream(300, 4, seed=3))
    for ln in s.learners:
        for r in ln.budget.requesters():
            assert ln.budget.spent_by(r) <= eps / 3 + 1e-12


def test_learner_ids_must_be_ordered():
    s = build(M=2)
    with pytest.raises(InvalidInputError):
        System(list(reversed(s.learners)), s.model, 5)
    with pytest.raises(InvalidInputError):
        System([], s.model, 5)

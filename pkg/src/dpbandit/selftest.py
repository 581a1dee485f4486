"""A fast pass over core properties, used by ``dpbandit selftest``.

Each check returns ``(name, passed, detail)``. The full test suite is far more
thorough; this is a smoke test for an installed copy.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .learner import LearnerConfig, control_g1
from .partition import PartitionTree
from .privacy import PrivateCounter, exp_mechanism_probs


def check_counter():
    rng = np.random.default_rng(0)
    stream = rng.integers(0, 2, 256)
    ctr = PrivateCounter(256, 0.0)
    total = 0
    for t, v in enumerate(stream, 1):
        ctr.insert(float(v))
        total += int(v)
        if ctr.prefix_sum(t) != total:
            return False, f"prefix sum wrong at t={t}"
    return True, "noise-free prefix sums exact for 256 rounds"


def check_dyadic():
    for t in range(1, 1025):
        nodes = kernels.dyadic_nodes(t)
        if len(nodes) != bin(t).count("1") or sum(1 << j for j, _ in nodes) != t:
            return False, f"bad decomposition of {t}"
    return True, "decompositions of 1..1024 cover [1, t] with popcount(t) blocks"


def check_exp_mechanism():
    rng = np.random.default_rng(1)
    worst = 0.0
    for eps in (0.01, 0.1, 1.0):
        for _ in range(200):
            s = rng.random(10)
            s2 = np.clip(s + rng.uniform(-1, 1, 10), s - 1, s + 1)
            p, q = exp_mechanism_probs(s, eps, 1.0), exp_mechanism_probs(s2, eps, 1.0)
            worst = max(worst, float(np.max(np.log(p / q))) / eps)
    return worst <= 1 + 1e-9, f"max log ratio / eps = {worst:.6f}"


def check_partition():
    rng = np.random.default_rng(2)
    tree = PartitionTree(2, 2, A=1, p=2)
    for x in rng.random((5000, 2)):
        tree.observe(x)
    vol = sum(2.0 ** (-2 * c.level) for c in tree.active())
    return math.isclose(vol, 1.0), f"active leaves cover volume {vol:.12f}"


def check_backend():
    return True, f"kernel backend: {kernels.BACKEND}"


def check_control():
    cfg = LearnerConfig(learner_id=0, own_videos=[0], m=2, alpha=1.0)
    v = control_g1(math.e, 1, cfg)
    return math.isclose(v, 4.0), f"G1(e, level 1) = {v}"


CHECKS = [("counter", check_counter), ("dyadic", check_dyadic),
          ("exp-mechanism", check_exp_mechanism), ("partition", check_partition),
          ("control", check_control), ("backend", check_backend)]


def run_checks():
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the remaining checks
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out

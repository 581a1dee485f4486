"""The compiled and pure-Python kernels must agree bit for bit."""
import hashlib
import os
import pickle
import subprocess
import sys

import numpy as np
import pytest

from dpbandit import kernels
from dpbandit.errors import CapacityError, InvalidInputError

BACKENDS = kernels.backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


def test_dyadic_nodes_popcount(impl):
    for t in range(1, 1025):
        assert len(impl.dyadic_nodes(t)) == bin(t).count("1") <= 11


def test_counter_errors(impl):
    with pytest.raises(InvalidInputError):
        impl.DyadicCounter(0, 0.0)
    with pytest.raises(InvalidInputError):
        impl.DyadicCounter(4, -1.0)
    ctr = impl.DyadicCounter(2, 0.0)
    ctr.insert(1.0)
    ctr.insert(1.0)
    with pytest.raises(CapacityError):
        ctr.insert(1.0)
    with pytest.raises(InvalidInputError):
        ctr.exact_prefix(3)


def test_locate_cell_edges(impl):
    assert impl.locate_cell([0.0, 1.0, 0.5], 4) == (0, 3, 2)
    assert impl.locate_cell([0.9999999], 2) == (1,)


def test_first_below_and_argmax(impl):
    assert impl.first_below([3, 2, 5], 2.5) == 1
    assert impl.first_below([3, 4], 2.5) == -1
    assert impl.argmax_first([0.1, 0.7, 0.7, 0.2]) == 1


def test_exp_sample_inverse_cdf(impl):
    # equal weights: u in [k/n, (k+1)/n) selects k
    for k in range(4):
        assert impl.exp_sample([0.3] * 4, 5.0, (k + 0.5) / 4) == k
    assert impl.exp_sample([1.0, 0.0], 1e6, 0.999999) == 0


@needs_cython
def test_backends_agree_on_counter_streams():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    data = np.random.default_rng(0).random(300)
    a = py.DyadicCounter(300, 2.0, np.random.default_rng(7))
    b = cy.DyadicCounter(300, 2.0, np.random.default_rng(7))
    for t, v in enumerate(data, 1):
        a.insert(v)
        b.insert(v)
        assert a.prefix_sum(t) == b.prefix_sum(t)
        assert a.exact_prefix(t) == b.exact_prefix(t)
    assert pickle.loads(pickle.dumps(b)).prefix_sum(300) == a.prefix_sum(300)


@needs_cython
def test_backends_agree_on_small_kernels():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    rng = np.random.default_rng(1)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        scores = list(rng.random(n))
        coef, u = float(rng.uniform(0, 50)), float(rng.random())
        assert py.exp_sample(scores, coef, u) == cy.exp_sample(scores, coef, u)
        assert py.argmax_first(scores) == cy.argmax_first(scores)
        counts = list(rng.integers(0, 5, n))
        assert py.first_below(counts, 2.5) == cy.first_below(counts, 2.5)
        x = list(rng.random(3))
        assert py.locate_cell(x, 8) == cy.locate_cell(x, 8)


def _log_digest(env):
    code = ("import hashlib\n"
            "from dpbandit.experiment import ExperimentConfig, run_single\n"
            "from dpbandit import kernels\n"
            "h = hashlib.sha256()\n"
            "for mode in ('DAP', 'P-DAP', 'GP-DAP'):\n"
            "    cfg = ExperimentConfig(T=600, explore_scale=0.05, gamma_scale=0.001)\n"
            "    s, _, _ = run_single(cfg, mode, 3)\n"
            "    for r in s.event_log:\n"
            "        h.update(repr(r.as_row()).encode())\n"
            "print(kernels.BACKEND, h.hexdigest())\n")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    return out.stdout.split()


@needs_cython
def test_simulation_identical_on_both_backends():
    base = dict(os.environ)
    base.pop("DPBANDIT_PURE", None)
    cy = _log_digest(base)
    py = _log_digest({**base, "DPBANDIT_PURE": "1"})
    assert cy[0] == "cython" and py[0] == "python"
    assert cy[1] == py[1]

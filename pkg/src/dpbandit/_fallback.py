"""Pure-Python versions of the hot kernels.

Every function here has a twin in ``_speedups.pyx`` with identical semantics
and an identical sequence of calls into the random generator, so results do
not depend on which backend is loaded.
"""
import math

from .errors import CapacityError, InvalidInputError


def dyadic_nodes(t):
    """Dyadic decomposition of ``[1, t]`` as ``(level, index)`` pairs.

    Node ``(j, i)`` covers leaves ``i*2**j + 1 .. (i+1)*2**j``. Nodes are
    returned from the largest block to the smallest.
    """
    nodes = []
    start = 0
    j = t.bit_length() - 1
    while j >= 0:
        if (t >> j) & 1:
            nodes.append((j, start >> j))
            start += 1 << j
        j -= 1
    return nodes


class DyadicCounter:
    """Binary-tree continual counter over a fixed horizon.

    Exact values are kept at the leaves; each dyadic node gets one Laplace
    draw of ``scale``, taken from ``rng`` the first time a query touches it.
    """

    def __init__(self, horizon, scale, rng=None):
        if horizon < 1:
            raise InvalidInputError("horizon must be >= 1")
        if scale < 0:
            raise InvalidInputError("scale must be >= 0")
        if scale > 0 and rng is None:
            raise InvalidInputError("a random generator is required when scale > 0")
        h = 1
        while h < horizon:
            h <<= 1
        self.horizon = h
        self.scale = float(scale)
        self._rng = rng
        self._cum = [0.0]
        self._noise = {}

    @property
    def count(self):
        return len(self._cum) - 1

    @property
    def depth(self):
        return self.horizon.bit_length() - 1

    def insert(self, value):
        if len(self._cum) - 1 >= self.horizon:
            raise CapacityError(f"counter horizon {self.horizon} exhausted")
        self._cum.append(self._cum[-1] + value)

    def exact_prefix(self, t):
        if t < 0 or t > len(self._cum) - 1:
            raise InvalidInputError(f"t={t} outside [0, {len(self._cum) - 1}]")
        return self._cum[t]

    def node_sum(self, level, index):
        lo = index << level
        hi = lo + (1 << level)
        if hi > len(self._cum) - 1:
            hi = len(self._cum) - 1
        if lo >= hi:
            return 0.0
        return self._cum[hi] - self._cum[lo]

    def node_noise(self, level, index):
        key = (level, index)
        z = self._noise.get(key)
        if z is None:
            z = self._rng.laplace(0.0, self.scale) if self.scale > 0 else 0.0
            self._noise[key] = z
        return z

    def prefix_sum(self, t):
        if t < 1 or t > len(self._cum) - 1:
            raise InvalidInputError(f"t={t} outside [1, {len(self._cum) - 1}]")
        total = self._cum[t]
        if self.scale > 0:
            for level, index in dyadic_nodes(t):
                total += self.node_noise(level, index)
        return total

    def nodes_read(self, t):
        return bin(t).count("1")

    def __getstate__(self):
        return {
            "horizon": self.horizon,
            "scale": self.scale,
            "rng": self._rng,
            "cum": list(self._cum),
            "noise": dict(self._noise),
        }

    def __setstate__(self, state):
        self.horizon = state["horizon"]
        self.scale = state["scale"]
        self._rng = state["rng"]
        self._cum = state["cum"]
        self._noise = state["noise"]


def locate_cell(x, side_count):
    """Cell index of ``x`` on a grid with ``side_count`` cells per dimension.

    The upper boundary 1.0 maps into the last cell.
    """
    last = side_count - 1
    cell = []
    for c in x:
        i = int(c * side_count)
        cell.append(last if i > last else i)
    return tuple(cell)


def first_below(counts, threshold):
    for i, n in enumerate(counts):
        if n < threshold:
            return i
    return -1


def argmax_first(values):
    best = 0
    best_v = values[0]
    for i in range(1, len(values)):
        if values[i] > best_v:
            best_v = values[i]
            best = i
    return best


def exp_sample(scores, coef, u):
    """Index drawn with probability proportional to ``exp(coef * score)``.

    ``u`` is a uniform variate in [0, 1); inversion over the stabilised
    weights keeps the draw a deterministic function of ``u``.
    """
    top = max(scores)
    weights = [math.exp(coef * (s - top)) for s in scores]
    total = 0.0
    for w in weights:
        total += w
    target = u * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if target < acc:
            return i
    return len(weights) - 1

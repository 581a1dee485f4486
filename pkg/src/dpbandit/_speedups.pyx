# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_fallback``.

Semantics and the order of random draws match the pure-Python versions
exactly; ``tests/test_kernels.py`` checks the two backends against each other.
"""
from cpython.mem cimport PyMem_Malloc, PyMem_Realloc, PyMem_Free
from libc.math cimport exp

from .errors import CapacityError, InvalidInputError


cdef inline int _bit_length(long t):
    cdef int n = 0
    while t > 0:
        t >>= 1
        n += 1
    return n


def dyadic_nodes(long t):
    cdef list nodes = []
    cdef long start = 0
    cdef int j = _bit_length(t) - 1
    while j >= 0:
        if (t >> j) & 1:
            nodes.append((j, start >> j))
            start += (<long>1) << j
        j -= 1
    return nodes


cdef class DyadicCounter:
    cdef readonly long horizon
    cdef readonly double scale
    cdef object _rng
    cdef double* _cum
    cdef long _n
    cdef long _cap
    cdef dict _noise

    def __cinit__(self, long horizon, double scale, rng=None):
        self._cum = NULL

    def __init__(self, long horizon, double scale, rng=None):
        if horizon < 1:
            raise InvalidInputError("horizon must be >= 1")
        if scale < 0:
            raise InvalidInputError("scale must be >= 0")
        if scale > 0 and rng is None:
            raise InvalidInputError("a random generator is required when scale > 0")
        cdef long h = 1
        while h < horizon:
            h <<= 1
        self.horizon = h
        self.scale = scale
        self._rng = rng
        self._n = 0
        self._cap = 16
        self._cum = <double*> PyMem_Malloc(self._cap * sizeof(double))
        if self._cum == NULL:
            raise MemoryError()
        self._cum[0] = 0.0
        self._noise = {}

    def __dealloc__(self):
        if self._cum != NULL:
            PyMem_Free(self._cum)

    @property
    def count(self):
        return self._n

    @property
    def depth(self):
        return _bit_length(self.horizon) - 1

    cdef void _grow(self) except *:
        cdef long cap = self._cap * 2
        cdef double* buf = <double*> PyMem_Realloc(self._cum, cap * sizeof(double))
        if buf == NULL:
            raise MemoryError()
        self._cum = buf
        self._cap = cap

    def insert(self, double value):
        if self._n >= self.horizon:
            raise CapacityError(f"counter horizon {self.horizon} exhausted")
        if self._n + 1 >= self._cap:
            self._grow()
        self._cum[self._n + 1] = self._cum[self._n] + value
        self._n += 1

    def exact_prefix(self, long t):
        if t < 0 or t > self._n:
            raise InvalidInputError(f"t={t} outside [0, {self._n}]")
        return self._cum[t]

    def node_sum(self, int level, long index):
        cdef long lo = index << level
        cdef long hi = lo + ((<long>1) << level)
        if hi > self._n:
            hi = self._n
        if lo >= hi:
            return 0.0
        return self._cum[hi] - self._cum[lo]

    cpdef double node_noise(self, int level, long index):
        key = (level, index)
        z = self._noise.get(key)
        if z is None:
            if self.scale > 0:
                z = self._rng.laplace(0.0, self.scale)
            else:
                z = 0.0
            self._noise[key] = z
        return z

    def prefix_sum(self, long t):
        if t < 1 or t > self._n:
            raise InvalidInputError(f"t={t} outside [1, {self._n}]")
        cdef double total = self._cum[t]
        cdef long start = 0
        cdef int j
        if self.scale > 0:
            j = _bit_length(t) - 1
            while j >= 0:
                if (t >> j) & 1:
                    total += self.node_noise(j, start >> j)
                    start += (<long>1) << j
                j -= 1
        return total

    def nodes_read(self, long t):
        cdef int n = 0
        while t > 0:
            n += t & 1
            t >>= 1
        return n

    def __reduce__(self):
        cum = [self._cum[i] for i in range(self._n + 1)]
        return (_rebuild_counter, (self.horizon, self.scale, self._rng, cum, dict(self._noise)))

    cdef void _restore(self, list cum, dict noise) except *:
        cdef long i
        while self._cap <= len(cum):
            self._grow()
        for i in range(len(cum)):
            self._cum[i] = cum[i]
        self._n = len(cum) - 1
        self._noise = noise


def _rebuild_counter(horizon, scale, rng, cum, noise):
    cdef DyadicCounter c = DyadicCounter(horizon, scale, rng)
    c._restore(cum, noise)
    return c


def locate_cell(x, long side_count):
    cdef long last = side_count - 1
    cdef long i
    cdef double c
    cdef list cell = []
    for v in x:
        c = v
        i = <long>(c * side_count)
        cell.append(last if i > last else i)
    return tuple(cell)


def first_below(list counts, double threshold):
    cdef Py_ssize_t i, n = len(counts)
    for i in range(n):
        if <double>counts[i] < threshold:
            return i
    return -1


def argmax_first(list values):
    cdef Py_ssize_t i, best = 0, n = len(values)
    cdef double v, best_v = values[0]
    for i in range(1, n):
        v = values[i]
        if v > best_v:
            best_v = v
            best = i
    return best


def exp_sample(list scores, double coef, double u):
    cdef Py_ssize_t i, n = len(scores)
    cdef double top = scores[0]
    cdef double s, total = 0.0, acc = 0.0, target
    cdef double* w = <double*> PyMem_Malloc(n * sizeof(double))
    if w == NULL:
        raise MemoryError()
    try:
        for i in range(1, n):
            s = scores[i]
            if s > top:
                top = s
        for i in range(n):
            s = scores[i]
            w[i] = exp(coef * (s - top))
            total += w[i]
        target = u * total
        for i in range(n):
            acc += w[i]
            if target < acc:
                return i
        return n - 1
    finally:
        PyMem_Free(w)

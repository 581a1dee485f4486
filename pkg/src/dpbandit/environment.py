"""Synthetic ground truth: reward fields, click sampling and context streams."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


class RewardModel:
    """Clamped cones ``u_k(x) = clip(h_k - L * ||x - c_k||**alpha, 0, 1)``.

    The Hölder constant of every field is exactly ``L`` (Euclidean norm).
    """

    def __init__(self, anchors, peaks, L=1.0, alpha=1.0):
        anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        peaks = np.asarray(peaks, dtype=float).reshape(-1)
        if anchors.shape[0] != peaks.shape[0]:
            raise InvalidInputError("one peak per anchor is required")
        if anchors.shape[0] == 0:
            raise InvalidInputError("a reward model needs at least one video")
        if np.any((anchors < 0) | (anchors > 1)):
            raise InvalidInputError("anchors must lie in [0, 1]^d")
        if np.any((peaks < 0) | (peaks > 1)):
            raise InvalidInputError("peaks must lie in [0, 1]")
        if not 0 < alpha <= 1 or L <= 0:
            raise InvalidInputError("need L > 0 and alpha in (0, 1]")
        self.anchors = anchors
        self.peaks = peaks
        self.L = float(L)
        self.alpha = float(alpha)

    @classmethod
    def random(cls, n_videos, d, rng, L=1.0, alpha=1.0, h_min=0.5):
        anchors = rng.random((n_videos, d))
        peaks = rng.uniform(h_min, 1.0, n_videos)
        return cls(anchors, peaks, L, alpha)

    @property
    def n_videos(self):
        return self.peaks.shape[0]

    @property
    def d(self):
        return self.anchors.shape[1]

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise InvalidInputError(f"context has dimension {x.shape[-1]}, expected {self.d}")
        return x

    def expected_reward(self, k, x):
        if not 0 <= k < self.n_videos:
            raise InvalidInputError(f"unknown video {k}")
        x = self._check_x(x)
        dist = float(np.sqrt(np.sum((x - self.anchors[k]) ** 2)))
        return min(max(self.peaks[k] - self.L * dist ** self.alpha, 0.0), 1.0)

    def expected_rewards(self, X):
        """All videos at once; ``X`` is ``(d,)`` or ``(n, d)``, result ``(..., n_videos)``."""
        X = self._check_x(X)
        diff = X[..., None, :] - self.anchors
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        return np.clip(self.peaks - self.L * dist ** self.alpha, 0.0, 1.0)

    def sample_click(self, k, x, rng):
        return int(rng.random() < self.expected_reward(k, x))

    def best_arm(self, arms, x):
        arms = list(arms)
        if not arms:
            raise InvalidInputError("arm set is empty")
        u = self.expected_rewards(x)[arms]
        i = int(np.argmax(u))
        return arms[i], float(u[i])

    def to_dict(self):
        return {
            "anchors": self.anchors.tolist(),
            "peaks": self.peaks.tolist(),
            "L": self.L,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["anchors"], data["peaks"], data.get("L", 1.0), data.get("alpha", 1.0))


@dataclass
class ContextGenerator:
    """Uniform or clustered (Gaussian blobs clipped to the cube) arrivals."""

    d: int
    kind: str = "uniform"
    centers: list = field(default_factory=list)
    spread: float = 0.05
    weights: list = field(default_factory=list)

    def __post_init__(self):
        if self.d < 1:
            raise InvalidInputError("dimension must be >= 1")
        if self.kind not in ("uniform", "clustered"):
            raise InvalidInputError(f"unknown generator kind {self.kind!r}")
        if self.kind == "clustered":
            if not self.centers:
                raise InvalidInputError("clustered generator needs centers")
            c = np.asarray(self.centers, dtype=float)
            if c.ndim != 2 or c.shape[1] != self.d:
                raise InvalidInputError("centers must be a list of d-vectors")
            if self.spread < 0:
                raise InvalidInputError("spread must be >= 0")
            if self.weights and len(self.weights) != len(self.centers):
                raise InvalidInputError("one weight per center is required")

    def _weights(self):
        w = np.asarray(self.weights or [1.0] * len(self.centers), dtype=float)
        return w / w.sum()

    def sample(self, n, rng):
        """``n`` contexts as an ``(n, d)`` array."""
        if self.kind == "uniform":
            return rng.random((n, self.d))
        centers = np.asarray(self.centers, dtype=float)
        idx = rng.choice(len(centers), size=n, p=self._weights())
        pts = centers[idx] + rng.normal(0.0, 1.0, (n, self.d)) * self.spread
        return np.clip(pts, 0.0, 1.0)

    def next_context(self, rng):
        return self.sample(1, rng)[0]

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "clustered":
            out.update(centers=[list(map(float, c)) for c in self.centers],
                       spread=self.spread, weights=list(self.weights))
        return out

    @classmethod
    def from_dict(cls, data, d):
        data = dict(data or {})
        return cls(d=d, kind=data.get("kind", "uniform"), centers=data.get("centers", []),
                   spread=data.get("spread", 0.05), weights=data.get("weights", []))

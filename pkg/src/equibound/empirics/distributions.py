"""Finite data distributions and seeded i.i.d. samples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..metric_core import FiniteMetricSpace
from ..symmetry import FactorSplit

PROB_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class DataDistribution:
    """Probabilities over the points of ``space``.

    ``ystar`` maps X indices to Y indices when the law sits on the graph of a
    deterministic labeling; ``split`` ties point indices to (x, y) pairs.
    """

    space: FiniteMetricSpace
    probs: np.ndarray
    ystar: np.ndarray | None = None
    ystar_lipschitz: float | None = None
    split: FactorSplit | None = None

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.shape != (len(self.space),):
            raise ValueError(f"probabilities must have length {len(self.space)}")
        if (p < 0).any():
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1) > PROB_SLACK:
            raise ValueError(f"probabilities sum to {p.sum():.15g}, not 1")
        if self.ystar is not None:
            if self.split is None:
                raise ValueError("a labeling needs the X x Y split of the space")
            ys = np.asarray(self.ystar, dtype=np.int64)
            on = p > 0
            off_graph = ys[self.split.x_of[on]] != self.split.y_of[on]
            if off_graph.any():
                z = int(np.flatnonzero(on)[np.flatnonzero(off_graph)[0]])
                raise ValueError(f"support point {self.space.labels[z]!r} is off the graph of y*")
            object.__setattr__(self, "ystar", ys)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    @classmethod
    def uniform(cls, space: FiniteMetricSpace, points=None, **kw) -> "DataDistribution":
        p = np.zeros(len(space))
        idx = np.arange(len(space)) if points is None else np.asarray(points, dtype=np.int64)
        p[idx] = 1.0 / len(idx)
        return cls(space, p, **kw)


@dataclass(frozen=True)
class Sample:
    draws: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return len(self.draws)

    def measure(self, size: int) -> np.ndarray:
        """Empirical law as a probability vector over ``size`` points."""
        return np.bincount(self.draws, minlength=size) / self.n


def sample(dist: DataDistribution, n: int, seed: int) -> Sample:
    """n i.i.d. draws by inverse CDF; the same seed gives the same draws."""
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(dist.probs)
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    # rounding can leave the last cdf value just below 1
    last = int(dist.support[-1])
    idx = np.minimum(idx, last)
    return Sample(idx.astype(np.int64), int(seed))

"""Exact generalization and approximation errors on finite instances.

Every error here is linear in the data law, so populations and samples are
both handled as probability vectors over the points of Z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bounds import concentration_bound, dudley_bound
from ..metric_core import FiniteMetricSpace, cover_of
from ..symmetry import (
    EmptyClassError,
    FunctionClass,
    GroupAction,
    TransformationSubset,
    augment_distribution,
    averaged_class,
    orbit_representatives,
)
from .distributions import DataDistribution, Sample

EXACT_RADEMACHER_N = 20


def gen_err(values: np.ndarray, population: np.ndarray, empirical: np.ndarray) -> float:
    """sup_f (P f - P_n f) for laws given as probability vectors."""
    if values.shape[0] == 0:
        raise EmptyClassError("function class is empty")
    return float((values @ (population - empirical)).max())


def empirical_gen_err(cls: FunctionClass, smp: Sample, dist: DataDistribution) -> float:
    return gen_err(cls.values, dist.probs, smp.measure(len(dist.probs)))


def g_averaged_gen_err(
    cls: FunctionClass, smp: Sample, dist: DataDistribution, action: GroupAction, subset: TransformationSubset
) -> float:
    """sup_f (E_g E f(g.Z) - (1/n) sum_i E_g f(g.Z_i)) by direct double sum over the subset."""
    q = smp.measure(len(dist.probs))
    acc = np.zeros(len(cls))
    for g in subset.members:
        moved = cls.values[:, action.table[g]]
        acc += moved @ dist.probs - moved @ q
    return float((acc / len(subset)).max())


def augmented_gen_err(
    cls: FunctionClass, smp: Sample, dist: DataDistribution, action: GroupAction, subset: TransformationSubset
) -> float:
    """GenErr of the class against the augmented population and augmented sample."""
    q = smp.measure(len(dist.probs))
    return gen_err(
        cls.values,
        augment_distribution(dist.probs, action, subset),
        augment_distribution(q, action, subset),
    )


def projected_gen_err(
    cls: FunctionClass, smp: Sample, dist: DataDistribution, action: GroupAction, subset: TransformationSubset
) -> float:
    """GenErr of the class restricted to orbit representatives, on projected data."""
    reps = orbit_representatives(action, subset)
    pos = reps.position()
    k = len(reps.points)
    p0 = np.bincount(pos, weights=dist.probs, minlength=k)
    q0 = np.bincount(pos, weights=smp.measure(len(dist.probs)), minlength=k)
    return gen_err(cls.values[:, list(reps.points)], p0, q0)


@dataclass(frozen=True)
class RademacherEstimate:
    estimate: float
    half_width: float
    exact: bool


def empirical_rademacher(cls: FunctionClass, smp: Sample, trials: int = 1000, seed: int = 0) -> RademacherEstimate:
    """E_sigma sup_f (1/n) sum_i sigma_i f(Z_i); exact for n <= 20, Monte Carlo otherwise."""
    V = cls.values[:, smp.draws].T
    n = smp.n
    if n <= EXACT_RADEMACHER_N:
        total = 0.0
        count = 1 << n
        chunk = 1 << min(n, 16)
        bits = np.arange(n)
        for start in range(0, count, chunk):
            codes = np.arange(start, min(start + chunk, count))[:, None]
            sigma = 1.0 - 2.0 * ((codes >> bits) & 1)
            total += (sigma @ V).max(axis=1).sum()
        return RademacherEstimate(float(total / count / n), 0.0, True)
    rng = np.random.default_rng(seed)
    sigma = rng.choice(np.array([-1.0, 1.0]), size=(trials, n))
    sups = (sigma @ V).max(axis=1) / n
    half = 1.96 * sups.std(ddof=1) / math.sqrt(trials) if trials > 1 else math.inf
    return RademacherEstimate(float(sups.mean()), float(half), False)


def empirical_app_err(cls: FunctionClass, dist: DataDistribution) -> float:
    """min_f E f(Z) under the exact law."""
    return float((cls.values @ dist.probs).min())


# ---------------------------------------------------------------------------
# orbitwise approximation bound


@dataclass(frozen=True)
class OrbitwiseResult:
    value: float
    unreachable_mass: float
    representatives: tuple
    choices: tuple


def orbitwise_app_bound(
    action: GroupAction, subset: TransformationSubset, dist: DataDistribution, eps: float
) -> OrbitwiseResult:
    """E over representatives of min_y E_{g | rep} (d_Y(g.y, y*(g.rep)) - eps)_+^2.

    Each point's mass is split evenly over the subset elements carrying its
    representative to it. Mass that no single element reaches is charged
    diam(Y)^2.
    """
    split = action.factors
    if dist.ystar is None or split is None:
        raise ValueError("the bound needs a labeling y* and an X x Y split")
    x_action = GroupAction(action.group, split.x_space, split.act_x)
    reps = orbit_representatives(x_action, subset)
    px = np.bincount(split.x_of, weights=dist.probs, minlength=len(split.x_space))
    dy = split.y_space.dist
    S = np.asarray(subset.members, dtype=np.int64)
    value = 0.0
    lost = 0.0
    choices = []
    proj = reps.project
    for r in reps.points:
        targets = split.act_x[S, r]
        hits = np.bincount(targets, minlength=len(px))
        orbit = np.flatnonzero(proj == r)
        missing = orbit[(hits[orbit] == 0) & (px[orbit] > 0)]
        lost += float(px[missing].sum())
        live = px[targets] > 0
        if not live.any():
            choices.append(None)
            continue
        gs, xs = S[live], targets[live]
        w = px[xs] / hits[xs]
        # cost[y] = sum_g w_g (d(g.y, y*(g.r)) - eps)_+^2
        moved = split.act_y[gs]
        gap = np.maximum(dy[moved, dist.ystar[xs][:, None]] - eps, 0.0)
        cost = w @ gap**2
        best = int(cost.argmin())
        value += float(cost[best])
        choices.append(split.y_space.labels[best])
    value += lost * split.y_space.diameter**2
    return OrbitwiseResult(value, lost, tuple(split.x_space.labels[r] for r in reps.points), tuple(choices))


# ---------------------------------------------------------------------------
# sup-norm covers and the explicit generalization bound


@dataclass(frozen=True)
class StepCover:
    """Upper envelope t -> ln N(F, t) from covers at finitely many radii."""

    radii: np.ndarray
    counts: np.ndarray
    size: int
    diameter: float
    mode: str

    def __call__(self, t: float) -> float:
        i = int(np.searchsorted(self.radii, t, side="right")) - 1
        count = self.size if i < 0 else int(self.counts[i])
        return math.log(count)


def sup_distances(values: np.ndarray) -> np.ndarray:
    # repeated columns cannot change a sup distance
    values = np.unique(values, axis=1)
    k, width = values.shape
    out = np.empty((k, k))
    chunk = max(1, 4_000_000 // max(1, k * width))
    for s in range(0, k, chunk):
        out[s : s + chunk] = np.abs(values[s : s + chunk, None, :] - values[None, :, :]).max(axis=2)
    return out


def class_log_cover(cls: FunctionClass, max_radii: int = 64, exact_cap: int = 64) -> StepCover:
    """Sup-norm covering numbers of the class on a grid of its pairwise distances.

    Between grid radii the count at the next smaller radius is used, which
    is an upper bound because covering numbers are nonincreasing. Covers are
    exact up to ``exact_cap`` distinct functions and greedy above.
    """
    vals = np.unique(cls.values, axis=0)
    k = vals.shape[0]
    if k == 1:
        return StepCover(np.array([0.0]), np.array([1]), 1, 0.0, "exact")
    dist = sup_distances(vals)
    space = FiniteMetricSpace(tuple(range(k)), dist, check_triangle=False)
    distinct = np.unique(dist[np.triu_indices(k, 1)])
    if len(distinct) > max_radii:
        idx = np.unique(np.linspace(0, len(distinct) - 1, max_radii).round().astype(int))
        distinct = distinct[idx]
    mode = "exact" if k <= exact_cap else "greedy"
    counts = [cover_of(space, float(r), None, mode, None)[0] for r in distinct]
    counts = np.minimum.accumulate(np.array(counts))
    return StepCover(distinct, counts, k, float(dist.max()), mode)


@dataclass(frozen=True)
class ExplicitBound:
    total: float
    two_eps: float
    chaining: float
    confidence: float
    diameter: float


def explicit_gen_bound(
    cls: FunctionClass, action: GroupAction, subset: TransformationSubset, eps: float, n: int, delta: float
) -> ExplicitBound:
    """2 eps + Dudley bound of the subset-averaged class + sqrt(M ln(2/delta)/n)."""
    avg = averaged_class(cls, action, subset)
    cover = class_log_cover(avg)
    chain = dudley_bound(cover, cover.diameter, n) if cover.diameter > 0 else 0.0
    conf = concentration_bound(0.0, n, cls.M, delta)
    return ExplicitBound(2 * eps + chain + conf, 2 * eps, chain, conf, cover.diameter)

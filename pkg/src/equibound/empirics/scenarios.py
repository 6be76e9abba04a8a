"""Scenario presets: translations on a padded torus and planar rotations of labeled digits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from ..bounds import BoundInputs, isodiametric_constant
from ..metric_core import FiniteMetricSpace, distinct_distances, doubling_constant, product_space, torus_space
from ..symmetry import (
    FunctionClass,
    GroupAction,
    TransformationSubset,
    action_deformation_constants,
    action_from_json,
    build_partial_class,
    cyclic_group,
    equivariant_loss_class,
    orbit_representatives,
    product_action,
    torus_group,
)
from .distributions import DataDistribution

MAX_POINTS = 4096
MAX_TORUS_SIDE = 8
DOUBLING_RADII = 48


class ScenarioError(ValueError):
    pass


@dataclass(eq=False)
class Scenario:
    """An action with a labeled data law, named subsets and a class builder.

    ``build(subset, eps, seed)`` returns a class whose members have
    equivariance error at most ``eps`` for every element of ``subset``.
    """

    name: str
    action: GroupAction
    dist: DataDistribution
    subsets: dict
    build: Callable[[TransformationSubset, float, int], FunctionClass]
    default_subset: str = "full"
    notes: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def group_size(self) -> int:
        return self.action.group.order

    def density(self, subset: TransformationSubset) -> Fraction:
        return subset.measure_fraction

    def subset_for(self, lam: float | str | None = None) -> TransformationSubset:
        """Named subset, or the one whose density equals ``lam``."""
        if lam is None:
            return self.subsets[self.default_subset]
        if isinstance(lam, str):
            if lam not in self.subsets:
                raise ScenarioError(f"unknown subset {lam!r}; known: {sorted(self.subsets)}")
            return self.subsets[lam]
        if "window" in self.notes:
            return self.notes["window"](lam)
        for sub in self.subsets.values():
            if abs(float(sub.measure_fraction) - lam) <= 1e-9:
                return sub
        raise ScenarioError(f"no subset of density {lam} in scenario {self.name!r}")

    def geometry(self) -> dict:
        """Subset-independent constants, computed once."""
        if "geometry" not in self._cache:
            space = self.action.space
            reps = orbit_representatives(self.action, TransformationSubset.whole(self.action.group))
            centers = list(reps.points)
            radii = distinct_distances(space)
            exact = len(space) <= 128
            if not exact and len(radii) > DOUBLING_RADII:
                radii = radii[np.unique(np.linspace(0, len(radii) - 1, DOUBLING_RADII).round().astype(int))]
            count, _, _ = doubling_constant(space, None, False, centers, "exact" if exact else "greedy", radii)
            group = self.action.group
            iso = isodiametric_constant(group)
            self._cache["geometry"] = {
                "d": math.log2(count),
                "d_mode": "exact" if exact else "greedy",
                "d_G": group.ddim,
                "D": space.diameter,
                "delta_G": group.min_separation,
                "C_G": iso.C_G,
                "C_G_mode": iso.mode,
                "group_size": group.order,
            }
        return self._cache["geometry"]

    def deformation(self, subset: TransformationSubset):
        key = ("deformation", subset.members)
        if key not in self._cache:
            reps = orbit_representatives(self.action, subset)
            self._cache[key] = action_deformation_constants(self.action, subset, reps)
        return self._cache[key]

    def bound_inputs(
        self, subset: TransformationSubset, cls: FunctionClass, eps: float, n: int, delta: float,
        constant_factor: float = 1.0, overrides: dict | None = None,
    ) -> BoundInputs:
        geo = self.geometry()
        dc = self.deformation(subset)
        doc = {
            "d": geo["d"], "d_G": geo["d_G"], "D": geo["D"], "delta_G": geo["delta_G"],
            "L": dc.L, "L_prime": dc.L_prime, "stab_size": len(subset), "group_size": geo["group_size"],
            "n": n, "M": cls.M, "delta": delta, "eps": eps,
            "Lip_ystar": self.dist.ystar_lipschitz or 0.0, "C_G": geo["C_G"],
            "constant_factor": constant_factor,
        }
        doc.update(overrides or {})
        return BoundInputs.from_dict(doc)


# ---------------------------------------------------------------------------
# padded torus


def scenario_padded_torus(n_img: int = 4, k: int = 3, levels: int = 3, class_cap: int = 200) -> Scenario:
    """Translations of (Z/mZ)^2, m = n_img + k - 1, on pixel sites with quantized intensities.

    X is the m x m torus with the L1 metric, Y an evenly spaced intensity
    grid on [0, 1] with trivial action. The labeling is a bright image of
    side ``n_img`` whose intensity rises one level per ring inward, padded
    with zeros.
    """
    if n_img < 1 or k < 1 or levels < 2:
        raise ScenarioError("need n_img >= 1, k >= 1 and at least two levels")
    m = n_img + k - 1
    if m > MAX_TORUS_SIDE or m * m * levels > MAX_POINTS:
        raise ScenarioError(f"torus side {m} with {levels} levels exceeds the exact-size cap")
    group = torus_group(m)
    xs = torus_space(m)
    grid = np.linspace(0.0, 1.0, levels)
    ys = FiniteMetricSpace(tuple(float(v) for v in grid), np.abs(grid[:, None] - grid[None, :]))
    act_x = np.array([[xs.index(((a + g[0]) % m, (b + g[1]) % m)) for (a, b) in xs.labels]
                      for g in group.elements], dtype=np.int64)
    act_y = np.tile(np.arange(levels), (group.order, 1))
    action = product_action(group, xs, act_x, ys, act_y)
    ystar = np.zeros(len(xs), dtype=np.int64)
    for i, (a, b) in enumerate(xs.labels):
        if a < n_img and b < n_img:
            depth = min(a, b, n_img - 1 - a, n_img - 1 - b) + 1
            ystar[i] = min(depth, levels - 1)
    split = action.factors
    points = [z for z in range(len(action.space)) if split.y_of[z] == ystar[split.x_of[z]]]
    dist = DataDistribution.uniform(action.space, points, ystar=ystar,
                                    ystar_lipschitz=float(grid[1] - grid[0]), split=split)

    def members(offsets):
        return TransformationSubset(group, tuple(group.index(g) for g in offsets))

    lo = -(n_img // 2)
    window = [((a % m), (b % m)) for a in range(lo, lo + n_img) for b in range(lo, lo + n_img)]
    subsets = {
        "identity": TransformationSubset.trivial(group),
        "window": members(sorted(set(window))),
        "full": TransformationSubset.whole(group),
    }
    if m % 2 == 0:
        subsets["stride"] = members([(a, b) for a in range(0, m, 2) for b in range(0, m, 2)])

    def build(subset, eps, seed):
        return equivariant_loss_class(action, subset, class_cap, seed)

    return Scenario(f"padded_torus:{n_img}:{k}", action, dist, subsets, build, "window",
                    {"m": m, "levels": levels})


# ---------------------------------------------------------------------------
# rotations


def _arc(m: int, lo_deg: float, hi_deg: float) -> list[int]:
    lo = round(lo_deg * m / 360)
    hi = round(hi_deg * m / 360)
    return [s % m for s in range(lo, hi)]


def scenario_rotation(
    m: int = 360, window: tuple = (-60.0, 60.0), data_window: tuple = (-30.0, 30.0), kappa: float = 1.0
) -> Scenario:
    """Cyclic rotations of order m acting on orientations x and labels (digit, angle).

    Distances are in turns. The digit label carries cost ``kappa`` and is
    fixed by rotations; the angle label shifts with x. Points keep the angle
    label within one step of the orientation, and the data are uniform over
    ``data_window`` with labels y*(x) = (6, x).
    """
    lo, hi = window
    if not (-180 <= lo < hi <= 180 and hi - lo <= 360):
        raise ScenarioError("window must lie in (-180, 180] degrees")
    group = cyclic_group(m)
    steps = np.arange(m)
    cyc = np.minimum((steps[:, None] - steps[None, :]) % m, (steps[None, :] - steps[:, None]) % m) / m
    xs = FiniteMetricSpace(tuple(range(m)), cyc)
    digits = FiniteMetricSpace((6, 9), np.array([[0.0, kappa], [kappa, 0.0]]))
    ys = product_space(digits, xs)
    act_x = (steps[:, None] + steps[None, :]) % m
    ny = len(ys)
    act_y = np.empty((m, ny), dtype=np.int64)
    for j, (dgt, th) in enumerate(ys.labels):
        act_y[:, j] = [ys.index((dgt, (th + g) % m)) for g in range(m)]
    points = [(x, ys.index((dgt, (x + s) % m))) for x in range(m) for dgt in (6, 9) for s in (-1, 0, 1)]
    action = product_action(group, xs, act_x, ys, act_y, points)
    ystar = np.array([ys.index((6, x)) for x in range(m)], dtype=np.int64)
    split = action.factors
    data_x = set(_arc(m, *data_window))
    support = [z for z in range(len(action.space))
               if split.x_of[z] in data_x and split.y_of[z] == ystar[split.x_of[z]]]
    dist = DataDistribution.uniform(action.space, support, ystar=ystar, ystar_lipschitz=1.0, split=split)

    def window_for(lam: float) -> TransformationSubset:
        count = round(lam * m)
        if not 1 <= count <= m or abs(count - lam * m) > 1e-6:
            raise ScenarioError(f"density {lam} is not a multiple of 1/{m}")
        start = -(count // 2)
        return TransformationSubset(group, tuple((start + s) % m for s in range(count)))

    subsets = {
        "identity": TransformationSubset.trivial(group),
        "window": TransformationSubset(group, tuple(_arc(m, lo, hi))),
        "full": TransformationSubset.whole(group),
    }

    def build(subset, eps, seed):
        return equivariant_loss_class(action, subset, 100_000, seed)

    return Scenario(f"rotation:{m}", action, dist, subsets, build, "window",
                    {"window": window_for, "m": m})


# ---------------------------------------------------------------------------
# JSON documents


def _custom(doc: dict[str, Any]) -> Scenario:
    action = action_from_json(doc["action"])
    group = action.group
    space = action.space
    probs = doc.get("probs")
    dist = DataDistribution.uniform(space) if probs is None else DataDistribution(space, np.asarray(probs, float))
    subsets = {"identity": TransformationSubset.trivial(group), "full": TransformationSubset.whole(group)}
    for name, labels in doc.get("subsets", {}).items():
        subsets[name] = TransformationSubset(group, tuple(group.index(tuple(l) if isinstance(l, list) else l)
                                                          for l in labels))
    grid = doc.get("value_grid", [0.0, 0.5, 1.0])
    M = float(doc.get("M", max(grid) - min(grid)) or 1.0)
    offset = (max(grid) + min(grid)) / 2
    lip = float(doc.get("lipschitz", 1.0))
    cap = int(doc.get("class_cap", 200))

    def build(subset, eps, seed):
        return build_partial_class(action, subset, grid, M, lip, eps, offset, cap, seed)

    return Scenario(doc.get("name", "custom"), action, dist, subsets, build, doc.get("default_subset", "full"))


def scenario_from_json(doc: dict[str, Any]) -> Scenario:
    """``{"preset": "padded_torus" | "rotation", ...keyword arguments}`` or a custom action document."""
    if "preset" in doc:
        kw = {k: v for k, v in doc.items() if k != "preset"}
        for key in ("window", "data_window"):
            if key in kw:
                kw[key] = tuple(kw[key])
        try:
            if doc["preset"] == "padded_torus":
                return scenario_padded_torus(**kw)
            if doc["preset"] == "rotation":
                return scenario_rotation(**kw)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from exc
        raise ScenarioError(f"unknown scenario preset {doc['preset']!r}")
    if "action" not in doc:
        raise ScenarioError('scenario document needs "preset" or "action"')
    return _custom(doc)

"""Finite groups, actions on finite spaces, equivariance errors and partial classes.

Group elements and points are addressed by integer index; labels are kept
for reporting. Actions use the convention act(gh, z) = act(g, act(h, z)).
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Sequence

import numpy as np

from .metric_core import FiniteMetricSpace, cycle_space, doubling_dimension, space_from_json

VALUE_SLACK = 1e-12
LIPSCHITZ_SLACK = 1e-9
DEFAULT_CLASS_CAP = 100_000
_EXHAUSTIVE_ASSOC = 256


class GroupError(ValueError):
    """Invalid group or action tables."""


class EmptyStabilizer(GroupError):
    """No element meets the error budget; the identity always should."""


class EmptyClassError(ValueError):
    """No tabular function satisfies the requested constraints."""


# ---------------------------------------------------------------------------
# groups and word metrics


@dataclass(frozen=True)
class WordMetric:
    dist: np.ndarray
    right_invariant: bool
    right_witness: tuple | None


def _word_lengths(compose: np.ndarray, identity: int, generators: Sequence[int]) -> np.ndarray:
    n = compose.shape[0]
    length = np.full(n, -1, dtype=np.int64)
    length[identity] = 0
    queue = deque([identity])
    while queue:
        h = queue.popleft()
        for s in generators:
            k = compose[h, s]
            if length[k] < 0:
                length[k] = length[h] + 1
                queue.append(k)
    return length


def word_metric(group: "FiniteGroup", generators: Sequence[int]) -> WordMetric:
    """BFS word metric d(g, g') = |g^-1 g'| for the symmetric closure of ``generators``."""
    gens = sorted(set(int(s) for s in generators) | {int(group.inverse[s]) for s in generators})
    length = _word_lengths(group.compose, group.identity, gens)
    if np.any(length < 0):
        missing = group.elements[int(np.flatnonzero(length < 0)[0])]
        raise GroupError(f"disconnected Cayley graph: {missing!r} is not reachable from the generators")
    dist = length[group.compose[group.inverse[:, None], np.arange(group.order)[None, :]]]
    witness = None
    for h in range(group.order):
        col = group.compose[:, h]
        moved = dist[np.ix_(col, col)]
        bad = moved != dist
        if bad.any():
            g, g2 = map(int, np.argwhere(bad)[0])
            witness = (group.elements[g], group.elements[g2], group.elements[h])
            break
    dist.setflags(write=False)
    return WordMetric(dist, witness is None, witness)


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    """Group given by a composition table over element indices.

    ``compose[i, j]`` is the index of elements[i] * elements[j]. Generators
    are closed under inverses on construction.
    """

    elements: tuple
    compose: np.ndarray
    generators: tuple
    name: str = ""
    identity: int = field(init=False)
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        table = np.array(self.compose, dtype=np.int64)
        n = len(self.elements)
        if table.shape != (n, n):
            raise GroupError(f"composition table has shape {table.shape}, expected {(n, n)}")
        if n == 0 or table.min() < 0 or table.max() >= n:
            raise GroupError("composition table entries must index elements")
        ar = np.arange(n)
        ids = [e for e in range(n) if np.array_equal(table[e], ar) and np.array_equal(table[:, e], ar)]
        if not ids:
            raise GroupError("no identity element")
        identity = ids[0]
        hits = table == identity
        if not (hits.sum(axis=1) == 1).all():
            raise GroupError("some element has no unique inverse")
        inverse = hits.argmax(axis=1)
        if not np.array_equal(table[inverse, ar], np.full(n, identity)):
            raise GroupError("left and right inverses differ")
        _check_associative(self.elements, table)
        inverse.setflags(write=False)
        table.setflags(write=False)
        gens = tuple(sorted({int(s) for s in self.generators} | {int(inverse[s]) for s in self.generators}))
        object.__setattr__(self, "compose", table)
        object.__setattr__(self, "identity", identity)
        object.__setattr__(self, "inverse", inverse)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def order(self) -> int:
        return len(self.elements)

    def index(self, label) -> int:
        if isinstance(label, list):
            label = tuple(label)
        return self.elements.index(label)

    @cached_property
    def metric(self) -> WordMetric:
        return word_metric(self, self.generators)

    @property
    def word_dist(self) -> np.ndarray:
        return self.metric.dist

    @cached_property
    def metric_space(self) -> FiniteMetricSpace:
        return FiniteMetricSpace(self.elements, self.word_dist.astype(float), check_triangle=False)

    @property
    def min_separation(self) -> float:
        return 1.0

    @cached_property
    def ddim(self) -> float:
        # left translations are isometries, so one center suffices
        if self.order == 1:
            return 0.0
        return doubling_dimension(self.metric_space, transitive=True)

    def is_closed(self, members: Sequence[int]) -> bool:
        """True when ``members`` is closed under composition and inverse."""
        m = np.asarray(sorted(set(members)), dtype=np.int64)
        inside = np.zeros(self.order, dtype=bool)
        inside[m] = True
        return bool(inside[self.compose[np.ix_(m, m)]].all() and inside[self.inverse[m]].all())

    def generated(self, members: Sequence[int]) -> tuple:
        """Subgroup generated by ``members``."""
        seen = {self.identity}
        frontier = [self.identity]
        gens = set(int(x) for x in members) | {int(self.inverse[x]) for x in members}
        while frontier:
            nxt = []
            for h in frontier:
                for s in gens:
                    k = int(self.compose[h, s])
                    if k not in seen:
                        seen.add(k)
                        nxt.append(k)
            frontier = nxt
        return tuple(sorted(seen))


def _check_associative(elements: tuple, table: np.ndarray) -> None:
    n = table.shape[0]
    if n <= _EXHAUSTIVE_ASSOC:
        cs = range(n)
    else:
        cs = np.random.default_rng(0).choice(n, _EXHAUSTIVE_ASSOC, replace=False)
    for c in cs:
        left = table[table, c]
        right = table[np.arange(n)[:, None], table[:, c][None, :]]
        bad = left != right
        if bad.any():
            a, b = map(int, np.argwhere(bad)[0])
            raise GroupError(f"composition is not associative at ({elements[a]!r}, {elements[b]!r}, {elements[c]!r})")


def cyclic_group(n: int) -> FiniteGroup:
    i = np.arange(n)
    gens = (1 % n, (n - 1) % n) if n > 1 else (0,)
    return FiniteGroup(tuple(range(n)), (i[:, None] + i[None, :]) % n, gens, name=f"cyclic:{n}")


def dihedral_group(n: int) -> FiniteGroup:
    """Symmetries of the n-gon, order 2n; element (k, s) is r^k f^s."""
    elements = tuple((k, s) for s in (0, 1) for k in range(n))
    pos = {e: i for i, e in enumerate(elements)}
    table = np.empty((2 * n, 2 * n), dtype=np.int64)
    for i, (a, s) in enumerate(elements):
        for j, (b, t) in enumerate(elements):
            table[i, j] = pos[((a + (b if s == 0 else -b)) % n, s ^ t)]
    return FiniteGroup(elements, table, (pos[(1 % n, 0)], pos[(0, 1)]), name=f"dihedral:{n}")


def direct_product(a: FiniteGroup, b: FiniteGroup, name: str = "") -> FiniteGroup:
    na, nb = a.order, b.order
    elements = tuple((x, y) for x in a.elements for y in b.elements)
    ia = np.repeat(np.arange(na), nb)
    ib = np.tile(np.arange(nb), na)
    table = a.compose[ia[:, None], ia[None, :]] * nb + b.compose[ib[:, None], ib[None, :]]
    gens = [s * nb + b.identity for s in a.generators] + [a.identity * nb + t for t in b.generators]
    return FiniteGroup(elements, table, tuple(gens), name=name or f"{a.name}x{b.name}")


def torus_group(m: int) -> FiniteGroup:
    return direct_product(cyclic_group(m), cyclic_group(m), name=f"torus2d:{m}")


def group_preset(name: str) -> FiniteGroup:
    """Parse 'cyclic:n', 'dihedral:n', 'torus2d:m' or 'rotation360'."""
    if name == "rotation360":
        return cyclic_group(360)
    kind, _, size = name.partition(":")
    builders = {"cyclic": cyclic_group, "dihedral": dihedral_group, "torus2d": torus_group}
    if kind not in builders or not size.isdigit() or int(size) < 1:
        raise GroupError(f"unknown group preset {name!r}")
    return builders[kind](int(size))


# ---------------------------------------------------------------------------
# subsets and actions


@dataclass(frozen=True, eq=False)
class TransformationSubset:
    parent: FiniteGroup
    members: tuple

    def __post_init__(self) -> None:
        members = tuple(sorted(set(int(m) for m in self.members)))
        if not members:
            raise EmptyStabilizer("empty transformation subset")
        if members[0] < 0 or members[-1] >= self.parent.order:
            raise GroupError("subset members must index parent elements")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def measure_fraction(self) -> Fraction:
        return Fraction(len(self.members), self.parent.order)

    @property
    def labels(self) -> tuple:
        return tuple(self.parent.elements[m] for m in self.members)

    def is_subgroup(self) -> bool:
        return self.parent.is_closed(self.members)

    def metric_space(self) -> FiniteMetricSpace:
        return self.parent.metric_space.subspace(self.members)

    @classmethod
    def whole(cls, group: FiniteGroup) -> "TransformationSubset":
        return cls(group, tuple(range(group.order)))

    @classmethod
    def trivial(cls, group: FiniteGroup) -> "TransformationSubset":
        return cls(group, (group.identity,))


def density(stab: TransformationSubset) -> Fraction:
    """Exact fraction |Stab| / |G|."""
    return stab.measure_fraction


@dataclass(frozen=True, eq=False)
class FactorSplit:
    """Declared factorization of the action space Z inside X x Y."""

    x_space: FiniteMetricSpace
    y_space: FiniteMetricSpace
    x_of: np.ndarray
    y_of: np.ndarray
    act_x: np.ndarray
    act_y: np.ndarray


@dataclass(frozen=True, eq=False)
class GroupAction:
    """Table ``act[g, z]`` of point indices."""

    group: FiniteGroup
    space: FiniteMetricSpace
    table: np.ndarray
    factors: FactorSplit | None = None

    def __post_init__(self) -> None:
        table = np.array(self.table, dtype=np.int64)
        _check_action(self.group, len(self.space), table, "Z")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def act(self, g: int, z: int) -> int:
        return int(self.table[g, z])


def _check_action(group: FiniteGroup, size: int, table: np.ndarray, what: str) -> None:
    if table.shape != (group.order, size):
        raise GroupError(f"action table on {what} has shape {table.shape}, expected {(group.order, size)}")
    if table.min() < 0 or table.max() >= size:
        raise GroupError(f"action table on {what} must index points")
    srt = np.sort(table, axis=1)
    if not (srt == np.arange(size)).all():
        g = int(np.flatnonzero(~(srt == np.arange(size)).all(axis=1))[0])
        raise GroupError(f"element {group.elements[g]!r} does not act bijectively on {what}")
    if not np.array_equal(table[group.identity], np.arange(size)):
        raise GroupError(f"identity acts nontrivially on {what}")
    hs = range(group.order)
    if group.order * group.order * size > 300_000_000:
        hs = np.random.default_rng(0).choice(group.order, 64, replace=False)
    for h in hs:
        lhs = table[group.compose[:, h]]
        rhs = table[:, table[h]]
        bad = lhs != rhs
        if bad.any():
            g, z = map(int, np.argwhere(bad)[0])
            raise GroupError(
                f"action is not compatible with composition at g={group.elements[g]!r}, "
                f"h={group.elements[h]!r}, point {z}"
            )


def regular_action(group: FiniteGroup) -> GroupAction:
    """Left multiplication of the group on itself with the word metric."""
    return GroupAction(group, group.metric_space, group.compose.copy())


def product_action(
    group: FiniteGroup,
    x_space: FiniteMetricSpace,
    act_x: np.ndarray,
    y_space: FiniteMetricSpace,
    act_y: np.ndarray,
    points: Sequence[tuple[int, int]] | None = None,
    y_weight: float = 1.0,
) -> GroupAction:
    """Diagonal action g.(x, y) = (g.x, g.y) on an invariant subset of X x Y.

    Z carries the sum metric d_X + y_weight * d_Y.
    """
    act_x = np.asarray(act_x, dtype=np.int64)
    act_y = np.asarray(act_y, dtype=np.int64)
    _check_action(group, len(x_space), act_x, "X")
    _check_action(group, len(y_space), act_y, "Y")
    if points is None:
        points = [(i, j) for i in range(len(x_space)) for j in range(len(y_space))]
    xi = np.array([p[0] for p in points], dtype=np.int64)
    yi = np.array([p[1] for p in points], dtype=np.int64)
    ny = len(y_space)
    code = xi * ny + yi
    lookup = np.full(len(x_space) * ny, -1, dtype=np.int64)
    lookup[code] = np.arange(len(points))
    moved = lookup[act_x[:, xi] * ny + act_y[:, yi]]
    if (moved < 0).any():
        g, z = map(int, np.argwhere(moved < 0)[0])
        raise GroupError(f"point set is not invariant: element {group.elements[g]!r} moves point {z} outside")
    labels = tuple((x_space.labels[a], y_space.labels[b]) for a, b in zip(xi, yi))
    dist = x_space.dist[np.ix_(xi, xi)] + y_weight * y_space.dist[np.ix_(yi, yi)]
    space = FiniteMetricSpace(labels, dist, check_triangle=False)
    split = FactorSplit(x_space, y_space, xi, yi, act_x, act_y)
    return GroupAction(group, space, moved, split)


def action_from_json(doc: dict[str, Any]) -> GroupAction:
    """Action from a ``group`` name or ``elements``/``compose`` tables plus ``act`` and ``space``."""
    if "group" in doc:
        group = group_preset(doc["group"])
    else:
        for key in ("elements", "compose"):
            if key not in doc:
                raise GroupError(f'group document is missing "{key}"')
        elements = tuple(tuple(e) if isinstance(e, list) else e for e in doc["elements"])
        compose = _index_table(doc["compose"], elements)
        gens = doc.get("generators")
        gens = range(len(elements)) if gens is None else [_as_index(s, elements) for s in gens]
        group = FiniteGroup(elements, compose, tuple(gens), name=doc.get("name", "custom"))
    if "act" not in doc:
        return regular_action(group)
    space = space_from_json(doc["space"]) if "space" in doc else cycle_space(len(doc["act"][0]))
    act = np.asarray([[_as_index(z, space.labels) for z in row] for row in doc["act"]], dtype=np.int64)
    return GroupAction(group, space, act)


def _as_index(value, labels: tuple) -> int:
    """Labels take precedence; bare integers otherwise index positions."""
    if isinstance(value, list):
        value = tuple(value)
    if value in labels:
        return labels.index(value)
    if isinstance(value, int) and 0 <= value < len(labels):
        return value
    raise GroupError(f"unknown label {value!r}")


def _index_table(rows, elements: tuple) -> np.ndarray:
    return np.asarray([[_as_index(v, elements) for v in row] for row in rows], dtype=np.int64)


# ---------------------------------------------------------------------------
# function classes


@dataclass(frozen=True, eq=False)
class FunctionClass:
    """Finite class of tabular functions on ``domain``; ``values[k, z]``.

    Values lie in [offset - M/2, offset + M/2]. ``lipschitz`` is checked when
    given and the table is small; otherwise the tightest constant is available
    from :meth:`lipschitz_constant`.
    """

    domain: FiniteMetricSpace
    values: np.ndarray
    M: float
    lipschitz: float | None = None
    offset: float = 0.0
    method: str = "given"
    total: int | None = None
    seed: int | None = None
    predictors: np.ndarray | None = None

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2 or vals.shape[1] != len(self.domain):
            raise ValueError(f"values must have shape (k, {len(self.domain)})")
        if vals.shape[0] == 0:
            raise EmptyClassError("function class is empty")
        if not self.M > 0:
            raise ValueError("range bound M must be positive")
        spread = np.abs(vals - self.offset).max()
        if spread > self.M / 2 + VALUE_SLACK:
            raise ValueError(f"values exceed the range [offset - M/2, offset + M/2] (|v - offset| = {spread:.6g})")
        if self.lipschitz is not None and vals.shape[0] * len(self.domain) ** 2 <= 50_000_000:
            worst = _lipschitz_of(vals, self.domain.dist)
            if worst > self.lipschitz + LIPSCHITZ_SLACK:
                raise ValueError(f"a function has Lipschitz constant {worst:.6g} > {self.lipschitz}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    def lipschitz_constant(self) -> float:
        return _lipschitz_of(self.values, self.domain.dist)

    def restrict(self, indices: Sequence[int]) -> "FunctionClass":
        idx = np.asarray(indices, dtype=np.int64)
        return FunctionClass(self.domain.subspace(idx), self.values[:, idx], self.M, None, self.offset,
                             self.method, self.total, self.seed)

    def with_values(self, values: np.ndarray, method: str | None = None) -> "FunctionClass":
        return FunctionClass(self.domain, values, self.M, None, self.offset, method or self.method,
                             None, self.seed)


def _lipschitz_of(values: np.ndarray, dist: np.ndarray) -> float:
    n = dist.shape[0]
    if n < 2:
        return 0.0
    inv = 1.0 / (dist + np.eye(n))
    np.fill_diagonal(inv, 0.0)
    worst = 0.0
    for f in values:
        worst = max(worst, float((np.abs(f[:, None] - f[None, :]) * inv).max()))
    return worst


def loss_class(action: GroupAction, predictors: np.ndarray, method: str = "given") -> FunctionClass:
    """Squared-distance losses f(x, y) = d_Y(p(x), y)^2 for predictors p: X -> Y (index tables)."""
    split = action.factors
    if split is None:
        raise GroupError("loss classes need an action with a declared X x Y split")
    preds = np.atleast_2d(np.asarray(predictors, dtype=np.int64))
    dy = split.y_space.dist
    values = dy[preds[:, split.x_of], split.y_of[None, :]] ** 2
    top = split.y_space.diameter ** 2
    M = top if top > 0 else 1.0
    return FunctionClass(action.space, values, M, None, M / 2, method, preds.shape[0], None, preds)


# ---------------------------------------------------------------------------
# equivariance error and stabilizers


def equivariance_error(f: np.ndarray, g: int, action: GroupAction) -> float:
    """Loss-level error max_z |f(g.z) - f(z)|."""
    if not 0 <= g < action.group.order:
        raise GroupError(f"element index {g} is not in the acting group")
    f = np.asarray(f, dtype=float)
    return float(np.abs(f[action.table[g]] - f).max())


def predictor_equivariance_error(pred: np.ndarray, g: int, action: GroupAction) -> float:
    """Predictor-level error max_x d_Y(p(g.x), g.p(x))^2 for an index table p: X -> Y."""
    split = action.factors
    if split is None:
        raise GroupError("predictor-level error needs an action with a declared X x Y split")
    if not 0 <= g < action.group.order:
        raise GroupError(f"element index {g} is not in the acting group")
    pred = np.asarray(pred, dtype=np.int64)
    out = pred[split.act_x[g]]
    moved = split.act_y[g][pred]
    return float((split.y_space.dist[out, moved] ** 2).max())


def ee_table(cls: FunctionClass, action: GroupAction, elements: Sequence[int] | None = None) -> np.ndarray:
    """Array of ee(f, g) with shape (len(cls), len(elements))."""
    gs = range(action.group.order) if elements is None else elements
    vals = cls.values
    return np.stack([np.abs(vals[:, action.table[g]] - vals).max(axis=1) for g in gs], axis=1)


def stabilizer(cls: FunctionClass, action: GroupAction, eps: float) -> TransformationSubset:
    """{g : max_f ee(f, g) <= eps}; at eps = 0 the result is checked to be a subgroup."""
    worst = ee_table(cls, action).max(axis=0)
    members = np.flatnonzero(worst <= eps + VALUE_SLACK)
    if len(members) == 0:
        raise EmptyStabilizer("empty stabilizer: the identity should always qualify")
    stab = TransformationSubset(action.group, tuple(members))
    if eps == 0 and not stab.is_subgroup():
        raise GroupError("exact stabilizer is not closed under composition")
    return stab


def density_curve(cls: FunctionClass, action: GroupAction, eps_grid: Sequence[float]) -> list[Fraction]:
    worst = ee_table(cls, action).max(axis=0)
    n = action.group.order
    return [Fraction(int((worst <= e + VALUE_SLACK).sum()), n) for e in eps_grid]


# ---------------------------------------------------------------------------
# orbits and representatives


def _closure_labels(action: GroupAction, members: Sequence[int]) -> np.ndarray:
    n = len(action.space)
    lab = np.arange(n)
    rows = action.table[list(members)]
    while True:
        new = np.minimum(lab, lab[rows].min(axis=0))
        for row in rows:
            np.minimum.at(new, row, lab)
        new = new[new]
        if np.array_equal(new, lab):
            return lab
        lab = new


def orbits(action: GroupAction, subset: TransformationSubset) -> list[tuple]:
    """Classes of the symmetric-transitive closure of z ~ g.z over the subset."""
    lab = _closure_labels(action, subset.members)
    groups: dict[int, list[int]] = {}
    for z, root in enumerate(lab):
        groups.setdefault(int(root), []).append(z)
    return [tuple(v) for _, v in sorted(groups.items())]


def _smallest_label(labels: tuple, idx: Sequence[int]) -> int:
    try:
        return min(idx, key=lambda i: labels[i])
    except TypeError:
        return min(idx, key=lambda i: repr(labels[i]))


@dataclass(frozen=True, eq=False)
class RepresentativeMap:
    points: tuple
    space: FiniteMetricSpace
    project: np.ndarray

    def position(self) -> np.ndarray:
        """For each point, the index of its representative inside ``space``."""
        where = {p: i for i, p in enumerate(self.points)}
        return np.array([where[int(r)] for r in self.project], dtype=np.int64)


def orbit_representatives(action: GroupAction, subset: TransformationSubset) -> RepresentativeMap:
    """Lexicographically smallest label per closure orbit, with the projection iota."""
    labels = action.space.labels
    project = np.empty(len(labels), dtype=np.int64)
    reps = []
    for orb in orbits(action, subset):
        r = _smallest_label(labels, orb)
        reps.append(r)
        project[list(orb)] = r
    reps.sort()
    project.setflags(write=False)
    return RepresentativeMap(tuple(reps), action.space.subspace(reps), project)


@dataclass(frozen=True)
class DeformationConstants:
    """Smallest constants for the two deformation conditions, each with a witness."""

    L: float
    L_prime: float
    cond1_lower: float
    cond2_lower: float
    cond1_upper: float
    cond2_upper: float
    witnesses: dict


def action_deformation_constants(
    action: GroupAction, subset: TransformationSubset, reps: RepresentativeMap
) -> DeformationConstants:
    """Exhaustive scan of the distance-deformation ratios over subset x representatives.

    L bounds d(z0, z0') / d(g.z0, g.z0') and d_G(g, g') / dist(g.Z0, g'.Z0).
    L' bounds d(g.z0, g.z0') / d(z0, z0') and d(g.z0, g'.z0) / d_G(g, g').
    """
    d = action.space.dist
    dg = action.group.word_dist
    r = np.asarray(reps.points, dtype=np.int64)
    S = list(subset.members)
    wit: dict[str, Any] = {}
    c1l = c1u = c2l = c2u = 0.0
    base = d[np.ix_(r, r)]
    off = ~np.eye(len(r), dtype=bool)
    if len(r) > 1:
        for g in S:
            img = action.table[g, r]
            moved = d[np.ix_(img, img)]
            lo = (base[off] / moved[off]).max()
            hi = (moved[off] / base[off]).max()
            if lo > c1l:
                c1l = float(lo)
                wit["cond1_lower"] = action.group.elements[g]
            if hi > c1u:
                c1u = float(hi)
                wit["cond1_upper"] = action.group.elements[g]
    imgs = action.table[np.ix_(S, r)]
    for a in range(len(S)):
        for b in range(a + 1, len(S)):
            g, h = S[a], S[b]
            gap = d[np.ix_(imgs[a], imgs[b])].min()
            ratio = math.inf if gap == 0 else dg[g, h] / gap
            if ratio > c2l:
                c2l = ratio
                wit["cond2_lower"] = (action.group.elements[g], action.group.elements[h])
            spread = d[imgs[a], imgs[b]].max() / dg[g, h]
            if spread > c2u:
                c2u = float(spread)
                wit["cond2_upper"] = (action.group.elements[g], action.group.elements[h])
    L = max(c1l, c2l) or 1.0
    Lp = max(c1u, c2u) or 1.0
    return DeformationConstants(L, Lp, c1l, c2l, c1u, c2u, wit)


def augment_distribution(p: np.ndarray, action: GroupAction, subset: TransformationSubset) -> np.ndarray:
    """Orbit-averaged law (1/|S|) sum_g g.p for a probability vector over points."""
    p = np.asarray(p, dtype=float)
    rows = action.table[list(subset.members)]
    out = np.bincount(rows.ravel(), weights=np.tile(p, len(rows)), minlength=len(p))
    return out / len(rows)


def averaged_class(cls: FunctionClass, action: GroupAction, subset: TransformationSubset) -> FunctionClass:
    """Functions z -> E_g f(g.z) under the uniform law on the subset."""
    acc = np.zeros_like(cls.values)
    for g in subset.members:
        acc += cls.values[:, action.table[g]]
    return cls.with_values(acc / len(subset), method=f"{cls.method}+averaged")


# ---------------------------------------------------------------------------
# class construction


def _pair_bounds(action: GroupAction, subset: TransformationSubset, lipschitz: float, eps: float) -> np.ndarray:
    bound = lipschitz * np.array(action.space.dist)
    n = bound.shape[0]
    cols = np.arange(n)
    for g in subset.members:
        img = action.table[g]
        bound[cols, img] = np.minimum(bound[cols, img], eps)
        bound[img, cols] = np.minimum(bound[img, cols], eps)
    return bound


class _Budget(Exception):
    pass


def _search(grid: np.ndarray, bound: np.ndarray, cap: int, rng: np.random.Generator, work_limit: int):
    """Enumerate grid-valued tables with |f(a) - f(b)| <= bound[a, b].

    Returns (solutions, total, method). Exhaustive enumeration keeps a
    uniform reservoir of size ``cap``; if the node budget runs out, the
    search switches to randomized depth-first restarts.
    """
    n, V = bound.shape[0], len(grid)
    diff = np.abs(grid[:, None] - grid[None, :])
    tol = 1e-12
    reservoir: list[np.ndarray] = []
    total = 0
    nodes = 0
    assign = np.full(n, -1, dtype=np.int64)
    compat = None
    if n * n * V * V <= 20_000_000:
        # compat[i, a, j, b]: value b at j is allowed once i takes value a
        compat = diff[None, :, None, :] <= bound[:, None, :, None] + tol

    def descend(domains: np.ndarray, free: np.ndarray, order_rng, first_only: bool) -> bool:
        nonlocal total, nodes
        nodes += 1
        if nodes > work_limit:
            raise _Budget
        if not free.any():
            total += 1
            if len(reservoir) < cap:
                reservoir.append(assign.copy())
            else:
                k = int(rng.integers(total))
                if k < cap:
                    reservoir[k] = assign.copy()
            return True
        sizes = np.where(free, domains.sum(axis=1), V + 1)
        i = int(sizes.argmin())
        choices = np.flatnonzero(domains[i])
        if order_rng is not None:
            choices = order_rng.permutation(choices)
        free[i] = False
        for a in choices:
            assign[i] = a
            nxt = domains & (compat[i, a] if compat is not None else diff[a][None, :] <= bound[i][:, None] + tol)
            if free.any() and not nxt[free].any(axis=1).all():
                continue
            if descend(nxt, free, order_rng, first_only) and first_only:
                free[i] = True
                return True
        free[i] = True
        return False

    start = np.ones((n, V), dtype=bool)
    try:
        descend(start, np.ones(n, dtype=bool), None, False)
        return [grid[s] for s in reservoir], total, "exhaustive" if total <= cap else "reservoir"
    except _Budget:
        pass
    # randomized restarts: each returns the first table found along a random branch order
    seen: dict[bytes, np.ndarray] = {}
    attempts = 0
    work_limit = 50 * n + 100
    while len(seen) < cap and attempts < 20 * cap:
        attempts += 1
        reservoir.clear()
        total = 0
        nodes = 0
        assign[:] = -1
        try:
            descend(start, np.ones(n, dtype=bool), rng, True)
        except _Budget:
            continue
        if reservoir:
            seen.setdefault(reservoir[0].tobytes(), reservoir[0])
    if not seen:
        return [], 0, "random-dfs"
    keys = sorted(seen)
    return [grid[seen[k]] for k in keys], None, "random-dfs"


def build_partial_class(
    action: GroupAction,
    subset: TransformationSubset,
    value_grid: Sequence[float],
    M: float,
    lipschitz: float,
    eps: float,
    offset: float = 0.0,
    cap: int = DEFAULT_CLASS_CAP,
    seed: int = 0,
    work_limit: int = 200_000,
) -> FunctionClass:
    """Grid-valued, ``lipschitz``-Lipschitz tables with ee(f, g) <= eps for every g in the subset.

    Up to ``cap`` functions are returned; larger solution sets are sampled
    with ``seed`` and the sampling method is recorded on the class.
    """
    grid = np.unique(np.asarray(value_grid, dtype=float))
    if np.abs(grid - offset).max() > M / 2 + VALUE_SLACK:
        raise ValueError("value grid must lie inside [offset - M/2, offset + M/2]")
    bound = _pair_bounds(action, subset, lipschitz, eps)
    rng = np.random.default_rng(seed)
    sols, total, method = _search(grid, bound, cap, rng, work_limit)
    if not sols:
        raise EmptyClassError("no grid-valued function meets the Lipschitz and equivariance constraints")
    values = np.array(sols)
    if method != "random-dfs":
        values = values[np.lexsort(values.T[::-1])]
    return FunctionClass(action.space, values, M, lipschitz, offset, method, total, seed)


def equivariant_predictors(action: GroupAction, subset: TransformationSubset) -> list[tuple[np.ndarray, np.ndarray]]:
    """Predictors p: X -> Y with p(g.x) = g.p(x) for every g in the subset.

    Returns one entry per closure orbit of X: (orbit point indices, admissible
    value tables). Each table row is p restricted to the orbit; any choice of
    one row per orbit gives an equivariant predictor.
    """
    split = action.factors
    if split is None:
        raise GroupError("predictor classes need an action with a declared X x Y split")
    group = action.group
    ax, ay = split.act_x, split.act_y
    nx, ny = ax.shape[1], ay.shape[1]
    S = list(subset.members)
    steps = S + [int(group.inverse[g]) for g in S]
    carrier = np.full(nx, -1, dtype=np.int64)
    out = []
    for r in range(nx):
        if carrier[r] >= 0:
            continue
        carrier[r] = group.identity
        orbit = [r]
        queue = [r]
        while queue:
            x = queue.pop()
            for g in steps:
                x2 = int(ax[g, x])
                if carrier[x2] < 0:
                    carrier[x2] = group.compose[g, carrier[x]]
                    orbit.append(x2)
                    queue.append(x2)
        orbit = np.array(sorted(orbit), dtype=np.int64)
        full = np.zeros((nx, ny), dtype=np.int64)
        full[orbit] = ay[carrier[orbit]]
        ok = np.ones(ny, dtype=bool)
        for g in S:
            ok &= (full[ax[g, orbit]] == ay[g][full[orbit]]).all(axis=0)
        out.append((orbit, full[orbit][:, ok].T.copy()))
    return out


def equivariant_loss_class(
    action: GroupAction, subset: TransformationSubset, cap: int = DEFAULT_CLASS_CAP, seed: int = 0
) -> FunctionClass:
    """Squared-distance losses of every subset-equivariant predictor, or a seeded sample of ``cap``."""
    parts = equivariant_predictors(action, subset)
    counts = [len(tables) for _, tables in parts]
    if min(counts) == 0:
        raise EmptyClassError("no predictor is equivariant under the subset")
    total = math.prod(counts)
    nx = action.factors.act_x.shape[1]
    if total <= cap:
        combos = np.array(list(itertools.product(*[range(c) for c in counts])), dtype=np.int64)
        method = "exhaustive"
    else:
        rng = np.random.default_rng(seed)
        seen: dict[bytes, np.ndarray] = {}
        tries = 0
        while len(seen) < cap and tries < 20 * cap:
            tries += 1
            pick = np.array([rng.integers(c) for c in counts], dtype=np.int64)
            seen.setdefault(pick.tobytes(), pick)
        combos = np.array([seen[k] for k in sorted(seen)])
        method = "sampled"
    preds = np.empty((len(combos), nx), dtype=np.int64)
    for j, (orbit, tables) in enumerate(parts):
        preds[:, orbit] = tables[combos[:, j]]
    cls = loss_class(action, preds, method)
    return FunctionClass(cls.domain, cls.values, cls.M, None, cls.offset, method, total,
                         None if method == "exhaustive" else seed, preds)

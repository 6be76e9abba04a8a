"""Finite metric spaces with exact covering numbers and doubling dimension.

Balls are closed and centered at points of the space. Exact covers are
found by branch-and-bound over ball bitmasks, seeded with the greedy cover.
"""
from __future__ import annotations

import math
from dataclasses import InitVar, dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

TRIANGLE_SLACK = 1e-9
RADIUS_SLACK = 1e-9
DEFAULT_EXACT_CAP = 64
_FULL_TRIANGLE_CHECK = 600


class MetricError(ValueError):
    """Raised for invalid distance tables or impossible cover requests."""


class UndefinedSeparation(MetricError):
    """A single-point space has no minimum separation."""


class CoverSizeError(MetricError):
    """Exact covering requested above the configured point cap."""


def _freeze_label(label):
    if isinstance(label, list):
        return tuple(_freeze_label(x) for x in label)
    return label


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Labeled points with a full distance table.

    ``check_triangle`` controls the O(n^3) triangle validation; spaces built
    from known metrics (presets, products, subspaces) skip it.
    """

    labels: tuple
    dist: np.ndarray
    check_triangle: InitVar[bool] = True
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self, check_triangle: bool) -> None:
        labels = tuple(_freeze_label(x) for x in self.labels)
        dist = np.array(self.dist, dtype=np.float64)
        n = len(labels)
        if dist.shape != (n, n):
            raise MetricError(f"distance table has shape {dist.shape}, expected {(n, n)}")
        if n == 0:
            raise MetricError("metric space needs at least one point")
        index = {lab: i for i, lab in enumerate(labels)}
        if len(index) != n:
            raise MetricError("duplicate point labels")
        if not np.all(np.isfinite(dist)):
            raise MetricError("distance table contains non-finite entries")
        if np.any(np.diag(dist) != 0):
            i = int(np.flatnonzero(np.diag(dist) != 0)[0])
            raise MetricError(f"dist({labels[i]!r}, {labels[i]!r}) must be 0")
        asym = np.abs(dist - dist.T) > 0
        if asym.any():
            i, j = map(int, np.argwhere(asym)[0])
            raise MetricError(f"asymmetric distances between {labels[i]!r} and {labels[j]!r}")
        off = dist + np.eye(n)
        if np.any(off <= 0):
            i, j = map(int, np.argwhere(off <= 0)[0])
            raise MetricError(f"distinct points {labels[i]!r}, {labels[j]!r} at distance {dist[i, j]}")
        if check_triangle:
            _check_triangle(labels, dist)
        dist.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    def index(self, label: Hashable) -> int:
        return self._index[_freeze_label(label)]

    def distance(self, a: Hashable, b: Hashable) -> float:
        return float(self.dist[self.index(a), self.index(b)])

    def ball(self, center: int, radius: float) -> np.ndarray:
        """Indices of points in the closed ball around point index ``center``."""
        return np.flatnonzero(self.dist[center] <= radius + RADIUS_SLACK * max(1.0, radius))

    def subspace(self, indices: Sequence[int]) -> "FiniteMetricSpace":
        idx = np.asarray(indices, dtype=int)
        return FiniteMetricSpace(
            tuple(self.labels[i] for i in idx), self.dist[np.ix_(idx, idx)], check_triangle=False
        )

    def to_json(self) -> dict:
        return {"labels": [_jsonable(x) for x in self.labels], "dist": self.dist.tolist()}


def _jsonable(label):
    if isinstance(label, tuple):
        return [_jsonable(x) for x in label]
    if isinstance(label, np.integer):
        return int(label)
    return label


def _check_triangle(labels: tuple, dist: np.ndarray) -> None:
    n = len(labels)
    if n <= _FULL_TRIANGLE_CHECK:
        middles: Iterable[int] = range(n)
    else:
        # evenly spaced intermediate points; full check is cubic
        middles = np.unique(np.linspace(0, n - 1, _FULL_TRIANGLE_CHECK).astype(int))
    for k in middles:
        via = dist[:, k, None] + dist[None, k, :]
        bad = dist > via + TRIANGLE_SLACK
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise MetricError(
                f"triangle inequality fails for ({labels[i]!r}, {labels[k]!r}, {labels[j]!r}): "
                f"d={dist[i, j]:.6g} > {dist[i, k]:.6g} + {dist[k, j]:.6g}"
            )


# ---------------------------------------------------------------------------
# presets and constructors


def cycle_space(m: int) -> FiniteMetricSpace:
    """Z/mZ with the word metric for generators +-1."""
    if m < 1:
        raise MetricError("cycle size must be positive")
    i = np.arange(m)
    diff = np.abs(i[:, None] - i[None, :])
    return FiniteMetricSpace(tuple(range(m)), np.minimum(diff, m - diff).astype(float), check_triangle=False)


def path_space(m: int, spacing: float = 1.0) -> FiniteMetricSpace:
    if m < 1:
        raise MetricError("path size must be positive")
    i = np.arange(m)
    return FiniteMetricSpace(
        tuple(range(m)), spacing * np.abs(i[:, None] - i[None, :]).astype(float), check_triangle=False
    )


def product_space(a: FiniteMetricSpace, b: FiniteMetricSpace, weight_b: float = 1.0) -> FiniteMetricSpace:
    """Cartesian product with the sum metric d_a + weight_b * d_b; labels are pairs."""
    labels = tuple((x, y) for x in a.labels for y in b.labels)
    nb = len(b)
    dist = np.repeat(np.repeat(a.dist, nb, axis=0), nb, axis=1) + weight_b * np.tile(b.dist, (len(a), len(a)))
    return FiniteMetricSpace(labels, dist, check_triangle=False)


def torus_space(m: int) -> FiniteMetricSpace:
    """(Z/mZ)^2 with the L1 word metric; labels are (i, j) pairs."""
    return product_space(cycle_space(m), cycle_space(m))


_PRESETS = {"cycle": cycle_space, "path": path_space, "torus2d": torus_space}


def space_from_json(doc: dict[str, Any]) -> FiniteMetricSpace:
    """Build a space from ``{"labels", "dist"}`` or ``{"preset", "size"}``."""
    if "preset" in doc:
        name = doc["preset"]
        if name not in _PRESETS:
            raise MetricError(f"unknown metric preset {name!r}; expected one of {sorted(_PRESETS)}")
        return _PRESETS[name](int(doc["size"]))
    if "labels" not in doc or "dist" not in doc:
        raise MetricError('metric document needs "labels" and "dist", or "preset" and "size"')
    return FiniteMetricSpace(tuple(doc["labels"]), np.asarray(doc["dist"], dtype=float))


# ---------------------------------------------------------------------------
# separation and covers


def min_separation(space: FiniteMetricSpace) -> float:
    if len(space) < 2:
        raise UndefinedSeparation("undefined separation: space has a single point")
    n = len(space)
    return float((space.dist + np.diag(np.full(n, np.inf))).min())


@dataclass(frozen=True)
class CoverCertificate:
    radius: float
    centers: tuple
    mode: str

    def covers(self, space: FiniteMetricSpace, targets: Sequence[int] | None = None) -> bool:
        if not self.centers:
            return targets is not None and len(targets) == 0
        idx = [space.index(c) for c in self.centers]
        reach = space.dist[idx] <= self.radius + RADIUS_SLACK * max(1.0, self.radius)
        covered = reach.any(axis=0)
        if targets is None:
            return bool(covered.all())
        return bool(covered[np.asarray(targets, dtype=int)].all())


def _ball_masks(space: FiniteMetricSpace, radius: float, targets: np.ndarray) -> list[int]:
    inside = space.dist[:, targets] <= radius + RADIUS_SLACK * max(1.0, radius)
    packed = np.packbits(inside, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def _greedy_cover(universe: int, sets: list[int]) -> list[int]:
    chosen: list[int] = []
    left = universe
    while left:
        best, gain = -1, 0
        for j, s in enumerate(sets):
            g = (s & left).bit_count()
            if g > gain:
                best, gain = j, g
        if best < 0:
            raise MetricError("targets cannot be covered")
        chosen.append(best)
        left &= ~sets[best]
    return chosen


def _exact_cover(universe: int, sets: list[int], incumbent: list[int]) -> list[int]:
    """Minimum set cover by depth-first branch-and-bound."""
    live = [j for j, s in enumerate(sets) if s & universe]
    # drop duplicate and dominated balls; keep the lowest index among equals
    if len(live) <= 256:
        kept = []
        for j in live:
            sj = sets[j] & universe
            dominated = False
            for k in live:
                if k == j:
                    continue
                sk = sets[k] & universe
                if sj & ~sk == 0 and (sj != sk or k < j):
                    dominated = True
                    break
            if not dominated:
                kept.append(j)
        live = kept
    nbits = universe.bit_length()
    holders: dict[int, list[int]] = {}
    for e in range(nbits):
        if universe >> e & 1:
            holders[e] = [j for j in live if sets[j] >> e & 1]
    reach: dict[int, int] = {}
    for e, hs in holders.items():
        r = 0
        for j in hs:
            r |= sets[j]
        reach[e] = r & universe
    best = list(incumbent)

    def lower_bound(left: int) -> int:
        biggest = max((sets[j] & left).bit_count() for j in live)
        bound = -(-left.bit_count() // biggest)
        # elements with pairwise disjoint holder sets need distinct balls
        used = 0
        independent = 0
        rest = left
        while rest:
            e = (rest & -rest).bit_length() - 1
            rest &= rest - 1
            if not reach[e] & used:
                independent += 1
                used |= reach[e]
        return max(bound, independent)

    def search(left: int, chosen: list[int]) -> None:
        nonlocal best
        if not left:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        if len(chosen) + lower_bound(left) >= len(best):
            return
        rest = left
        pick, fewest = -1, None
        while rest:
            e = (rest & -rest).bit_length() - 1
            rest &= rest - 1
            c = len(holders[e])
            if fewest is None or c < fewest:
                pick, fewest = e, c
        options = sorted(holders[pick], key=lambda j: (-(sets[j] & left).bit_count(), j))
        for j in options:
            chosen.append(j)
            search(left & ~sets[j], chosen)
            chosen.pop()

    if len(incumbent) > lower_bound(universe):
        search(universe, [])
    return best


def cover_of(
    space: FiniteMetricSpace,
    radius: float,
    targets: Sequence[int] | None = None,
    mode: str = "exact",
    cap: int | None = DEFAULT_EXACT_CAP,
) -> tuple[int, CoverCertificate]:
    """Cover ``targets`` (default: all points) by closed balls centered anywhere in ``space``."""
    if mode not in ("exact", "greedy"):
        raise MetricError(f"unknown cover mode {mode!r}")
    if not radius > 0:
        raise MetricError("radius must be positive")
    tg = np.arange(len(space)) if targets is None else np.asarray(targets, dtype=int)
    if len(tg) == 0:
        return 0, CoverCertificate(float(radius), (), mode)
    if mode == "exact" and cap is not None and len(tg) > cap:
        raise CoverSizeError(
            f"exact covering of {len(tg)} points exceeds the cap of {cap}; use mode='greedy'"
        )
    sets = _ball_masks(space, radius, tg)
    universe = (1 << len(tg)) - 1
    chosen = _greedy_cover(universe, sets)
    biggest = max(x.bit_count() for x in sets)
    if mode == "exact" and len(chosen) > -(-len(tg) // biggest):
        chosen = _exact_cover(universe, sets, chosen)
    centers = tuple(space.labels[j] for j in sorted(chosen))
    return len(chosen), CoverCertificate(float(radius), centers, mode)


def covering_number(
    space: FiniteMetricSpace, radius: float, mode: str = "exact", cap: int | None = DEFAULT_EXACT_CAP
) -> tuple[int, CoverCertificate]:
    """N(space, radius): minimum number of closed internal balls covering the space."""
    return cover_of(space, radius, None, mode, cap)


def covering_count(space: FiniteMetricSpace, radius: float, cap: int | None = DEFAULT_EXACT_CAP) -> float:
    """Exact covering number with the extended conventions N(X, 0) = inf, N(X, inf) = 0."""
    if radius == math.inf:
        return 0
    if radius <= 0:
        return math.inf
    return covering_number(space, radius, "exact", cap)[0]


def distinct_distances(space: FiniteMetricSpace) -> np.ndarray:
    iu = np.triu_indices(len(space), k=1)
    return np.unique(space.dist[iu])


def doubling_constant(
    space: FiniteMetricSpace,
    cap: int | None = None,
    transitive: bool = False,
    centers: Sequence[int] | None = None,
    mode: str = "exact",
    radii: Sequence[float] | None = None,
) -> tuple[int, Hashable, float]:
    """Max over centers p and radii R of the count of R/2-balls covering B(p, R).

    Returns (count, center label, radius). ``transitive`` restricts centers to
    the first point, valid when isometries act transitively (group metrics).
    ``centers`` restricts them to one point per isometry orbit. Greedy mode
    gives an upper estimate. ``radii`` defaults to every pairwise distance.
    """
    if len(space) == 1:
        return 1, space.labels[0], 0.0
    radii = distinct_distances(space) if radii is None else radii
    if centers is None:
        centers = [0] if transitive else range(len(space))
    best = (1, space.labels[0], 0.0)
    for p in centers:
        for r in radii:
            members = space.ball(p, float(r))
            if len(members) <= best[0]:
                continue
            count, _ = cover_of(space, float(r) / 2, members, mode, cap)
            if count > best[0]:
                best = (count, space.labels[p], float(r))
    return best


def doubling_dimension(
    space: FiniteMetricSpace,
    cap: int | None = None,
    transitive: bool = False,
    centers: Sequence[int] | None = None,
    mode: str = "exact",
) -> float:
    return math.log2(doubling_constant(space, cap, transitive, centers, mode)[0])


def cover_growth_check(
    space: FiniteMetricSpace, radii: Sequence[float], cap: int | None = DEFAULT_EXACT_CAP,
    ddim: float | None = None,
) -> list[dict]:
    """Exact N(Z, eps) against (2 diam / eps)^ddim, with the implied constant per radius."""
    d = doubling_dimension(space) if ddim is None else ddim
    diam = space.diameter
    rows = []
    for eps in radii:
        count, _ = covering_number(space, eps, "exact", cap)
        bound = (2 * diam / eps) ** d if diam > 0 else 1.0
        rows.append({
            "radius": float(eps),
            "covering_number": count,
            "bound": bound,
            "implied_constant": count / bound,
            "ddim": d,
            "diameter": diam,
        })
    return rows

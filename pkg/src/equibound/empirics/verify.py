"""Verification suites: each check records its inputs, both sides and a witness on failure."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from ..bounds import isodiametric_constant, kt_sandwich
from ..metric_core import (
    FiniteMetricSpace,
    covering_count,
    cycle_space,
    distinct_distances,
    path_space,
    product_space,
)
from ..symmetry import (
    EmptyStabilizer,
    FunctionClass,
    GroupAction,
    GroupError,
    TransformationSubset,
    action_deformation_constants,
    cyclic_group,
    density_curve,
    dihedral_group,
    ee_table,
    orbit_representatives,
    product_action,
    stabilizer,
    torus_group,
)
from .distributions import DataDistribution, Sample, sample
from .errors import augmented_gen_err, empirical_gen_err, g_averaged_gen_err, projected_gen_err

EQUALITY_TOL = 1e-12
INEQUALITY_SLACK = 1e-9


@dataclass
class Check:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    witness: Any = None
    info: bool = False

    def to_json(self) -> dict:
        out = {"name": self.name, "passed": bool(self.passed), "values": _plain(self.values)}
        if self.info:
            out["info"] = True
        if not self.passed and self.witness is not None:
            out["witness"] = _plain(self.witness)
        return out


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.info)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_json(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "failed": [c.name for c in self.checks if not c.passed and not c.info],
            "checks": [c.to_json() for c in self.checks],
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------------------
# generalization identities


def invariant_cycle_instance(n: int = 8, seed: int = 0):
    """Z/6Z rotating the first factor of C6 x {0, 1}; the class depends on the second factor only."""
    group = cyclic_group(6)
    xs = cycle_space(6)
    ys = FiniteMetricSpace((0, 1), np.array([[0.0, 1.0], [1.0, 0.0]]))
    act_x = group.compose.copy()
    act_y = np.zeros((6, 2), dtype=np.int64) + np.arange(2)
    action = product_action(group, xs, act_x, ys, act_y)
    y_of = action.factors.y_of
    levels = np.array([[0.0, 1.0], [1.0, 0.0], [0.25, 0.75], [0.5, 0.5], [0.9, 0.1]])
    cls = FunctionClass(action.space, levels[:, y_of], 1.0, None, 0.5, "given")
    probs = np.arange(1, len(action.space) + 1, dtype=float)
    dist = DataDistribution(action.space, probs / probs.sum())
    return action, cls, dist, sample(dist, n, seed)


def check_generr_chain(action, cls, dist, smp, subset=None) -> Check:
    """GenErr = G-averaged GenErr = augmented GenErr = projected GenErr, exactly."""
    subset = subset or TransformationSubset.whole(action.group)
    plain = empirical_gen_err(cls, smp, dist)
    averaged = g_averaged_gen_err(cls, smp, dist, action, subset)
    augmented = augmented_gen_err(cls, smp, dist, action, subset)
    projected = projected_gen_err(cls, smp, dist, action, subset)
    gaps = {
        "averaged": abs(plain - averaged),
        "augmented": abs(averaged - augmented),
        "projected": abs(plain - projected),
    }
    ok = max(gaps.values()) <= EQUALITY_TOL
    vals = {"gen_err": plain, "averaged": averaged, "augmented": augmented, "projected": projected,
            "max_gap": max(gaps.values())}
    return Check("generr_chain", ok, vals, None if ok else gaps)


def verify_generr2(
    cls: FunctionClass, action: GroupAction, subset: TransformationSubset, dist: DataDistribution,
    smp: Sample, eps: float,
) -> tuple[float, float, bool]:
    """(GenErr, 2 eps + subset-averaged GenErr, whether GenErr <= that within 1e-9)."""
    lhs = empirical_gen_err(cls, smp, dist)
    rhs = 2 * eps + g_averaged_gen_err(cls, smp, dist, action, subset)
    return lhs, rhs, lhs <= rhs + INEQUALITY_SLACK


def _coset_action(group, subgroups: Sequence[tuple], rng: np.random.Generator) -> GroupAction:
    """Disjoint union of left coset spaces G/H with a random Euclidean metric."""
    labels, blocks = [], []
    for b, H in enumerate(subgroups):
        seen: dict[frozenset, int] = {}
        owner: dict[int, int] = {}
        for g in range(group.order):
            coset = frozenset(int(x) for x in group.compose[g, list(H)])
            if coset not in seen:
                seen[coset] = len(labels)
                labels.append((b, min(coset)))
                for x in coset:
                    owner[x] = seen[coset]
        blocks.append(owner)
    table = np.empty((group.order, len(labels)), dtype=np.int64)
    for z, (b, rep) in enumerate(labels):
        for g in range(group.order):
            table[g, z] = blocks[b][int(group.compose[g, rep])]
    pts = rng.normal(size=(len(labels), 3))
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    space = FiniteMetricSpace(tuple(labels), dist, check_triangle=False)
    return GroupAction(group, space, table)


def random_action(rng: np.random.Generator, max_group: int = 24, max_points: int = 64) -> GroupAction:
    kind = rng.integers(3)
    if kind == 0:
        group = cyclic_group(int(rng.integers(2, max_group + 1)))
    elif kind == 1:
        group = dihedral_group(int(rng.integers(2, max_group // 2 + 1)))
    else:
        group = torus_group(int(rng.integers(2, int(math.isqrt(max_group)) + 1)))
    subgroups, total = [], 0
    for _ in range(int(rng.integers(1, 4))):
        H = group.generated([int(rng.integers(group.order))])
        size = group.order // len(H)
        if total + size > max_points:
            break
        subgroups.append(H)
        total += size
    if not subgroups:
        subgroups = [tuple(range(group.order))]
    return _coset_action(group, subgroups, rng)


def random_class(rng: np.random.Generator, action: GroupAction, k: int | None = None) -> FunctionClass:
    """Functions averaged over a random cyclic subgroup, then perturbed, with values in [0, 1]."""
    k = int(rng.integers(1, 9)) if k is None else k
    n = len(action.space)
    base = rng.uniform(size=(k, n))
    K = action.group.generated([int(rng.integers(action.group.order))])
    vals = np.mean([base[:, action.table[g]] for g in K], axis=0)
    noise = float(rng.choice([0.0, 0.05, 0.2]))
    vals = np.clip(vals + noise * rng.uniform(-1, 1, size=vals.shape), 0.0, 1.0)
    return FunctionClass(action.space, vals, 1.0, None, 0.5, "random")


def random_generr_instance(seed: int):
    rng = np.random.default_rng(seed)
    action = random_action(rng)
    cls = random_class(rng, action)
    probs = rng.dirichlet(np.ones(len(action.space)))
    dist = DataDistribution(action.space, probs / probs.sum())
    smp = sample(dist, int(rng.integers(3, 31)), int(rng.integers(2**32)))
    return action, cls, dist, smp


def generr_suite(instances: int = 100, seed: int = 0, eps_grid=(0.0, 0.1, 0.5), subset: str | None = None) -> SuiteReport:
    """Chain identities on the invariant cycle instance, then the tolerance inequality on random instances.

    ``subset="identity"`` replaces every stabilizer by the trivial subset.
    """
    rep = SuiteReport("generr")
    action, cls, dist, smp = invariant_cycle_instance(seed=seed)
    rep.add(check_generr_chain(action, cls, dist, smp))
    failures, worst = [], -math.inf
    for i in range(instances):
        action, cls, dist, smp = random_generr_instance(seed * 1_000_003 + i)
        for eps in eps_grid:
            S = TransformationSubset.trivial(action.group) if subset == "identity" else stabilizer(cls, action, eps)
            lhs, rhs, ok = verify_generr2(cls, action, S, dist, smp, eps)
            worst = max(worst, lhs - rhs)
            if not ok:
                failures.append({"instance": i, "eps": eps, "lhs": lhs, "rhs": rhs, "group": action.group.name})
            if eps == 0 and subset is None:
                proj = projected_gen_err(cls, smp, dist, action, S)
                avg = g_averaged_gen_err(cls, smp, dist, action, S)
                if abs(proj - avg) > EQUALITY_TOL:
                    failures.append({"instance": i, "eps": 0.0, "projected": proj, "averaged": avg})
    rep.add(Check("generr2_random", not failures,
                  {"instances": instances, "eps_grid": list(eps_grid), "max_lhs_minus_rhs": worst},
                  failures[:5] or None))
    return rep


# ---------------------------------------------------------------------------
# density laws


def density_suite(actions: int = 50, seed: int = 0, eps_grid=(0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0),
                  rotation=None) -> SuiteReport:
    """Dens(eps) nondecreasing and Stab_0 closed on random actions; the rotation window density."""
    rep = SuiteReport("density")
    bad_mono, bad_group = [], []
    for i in range(actions):
        rng = np.random.default_rng([seed, i])
        action = random_action(rng)
        cls = random_class(rng, action)
        curve = density_curve(cls, action, eps_grid)
        if any(a > b for a, b in zip(curve, curve[1:])):
            bad_mono.append({"action": i, "curve": curve})
        try:
            stab = stabilizer(cls, action, 0.0)
            closed = stab.is_subgroup()
        except (GroupError, EmptyStabilizer) as exc:
            closed, stab = False, str(exc)
        if not closed:
            bad_group.append({"action": i, "stabilizer": stab if isinstance(stab, str) else stab.labels})
    rep.add(Check("density_monotone", not bad_mono, {"actions": actions}, bad_mono[:5] or None))
    rep.add(Check("stab0_subgroup", not bad_group, {"actions": actions}, bad_group[:5] or None))
    if rotation is not None:
        window = rotation.subsets["window"]
        dens = rotation.density(window)
        cls = rotation.build(window, 0.0, seed)
        worst = float(ee_table(cls, rotation.action, window.members).max())
        rep.add(Check("rotation_density", dens == Fraction(1, 3) and worst == 0.0,
                      {"density": dens, "max_ee_on_window": worst}))
    return rep


# ---------------------------------------------------------------------------
# covering sandwich


def translation_instance(m: int = 6):
    """Z/mZ translating the first coordinate of the m x m torus; representatives {(0, j)}."""
    group = cyclic_group(m)
    c = cycle_space(m)
    Z = product_space(c, c)
    table = np.array([[Z.index(((a + g) % m, b)) for (a, b) in Z.labels] for g in range(m)], dtype=np.int64)
    action = GroupAction(group, Z, table)
    subset = TransformationSubset.whole(group)
    reps = orbit_representatives(action, subset)
    return action, subset, reps


def verify_cover_product(
    action: GroupAction, subset: TransformationSubset, reps, L: float, L_prime: float,
    radii: Sequence[float] | None = None, cap: int | None = 64,
) -> list[dict]:
    """Per radius r: N(Z0, 2rL) N(S, 2rL) <= N(Z, r) <= N(Z0, r/2L') N(S, r/2L'),
    and N(Z0, r) N(S, r) <= N(Z, r/2L)."""
    Z, Z0, S = action.space, reps.space, subset.metric_space()
    radii = distinct_distances(Z) if radii is None else radii
    rows = []
    for r in radii:
        r = float(r)
        mid = covering_count(Z, r, cap)
        lo = covering_count(Z0, 2 * r * L, cap) * covering_count(S, 2 * r * L, cap)
        hi = covering_count(Z0, r / (2 * L_prime), cap) * covering_count(S, r / (2 * L_prime), cap)
        cor_left = covering_count(Z0, r, cap) * covering_count(S, r, cap)
        cor_right = covering_count(Z, r / (2 * L), cap)
        rows.append({
            "radius": r, "lower": lo, "N_Z": mid, "upper": hi,
            "lower_ok": lo <= mid, "upper_ok": mid <= hi,
            "corollary_left": cor_left, "corollary_right": cor_right, "corollary_ok": cor_left <= cor_right,
        })
    return rows


def cover_suite(m: int = 6) -> SuiteReport:
    rep = SuiteReport("cover")
    action, subset, reps = translation_instance(m)
    dc = action_deformation_constants(action, subset, reps)
    rep.add(Check("deformation_constants", dc.L == 1.0 and dc.L_prime == 1.0,
                  {"L": dc.L, "L_prime": dc.L_prime}, dc.witnesses))
    rows = verify_cover_product(action, subset, reps, dc.L, dc.L_prime)
    bad = [r for r in rows if not (r["lower_ok"] and r["upper_ok"])]
    rep.add(Check("product_sandwich", not bad, {"rows": rows}, bad or None))
    bad_cor = [r for r in rows if not r["corollary_ok"]]
    rep.add(Check("quotient_cover", not bad_cor, {"radii": len(rows)}, bad_cor or None))
    trivial = TransformationSubset.trivial(action.group)
    t_reps = orbit_representatives(action, trivial)
    t_rows = verify_cover_product(action, trivial, t_reps, 1.0, 1.0, [1.0, 2.0, 3.0])
    rep.add(Check("trivial_subset", all(r["lower_ok"] and r["upper_ok"] for r in t_rows), {"rows": t_rows}))
    return rep


# ---------------------------------------------------------------------------
# isodiametric constant


def iso_suite(n: int = 8) -> SuiteReport:
    """Every subset A of Z/nZ with |A| >= 2 has diam(A) >= C_G (|A|/n)^(1/ddim); some subset is tight."""
    rep = SuiteReport("iso")
    group = cyclic_group(n)
    res = isodiametric_constant(group, cap=max(16, n))
    dist = group.word_dist.astype(float)
    slack, tight, worst = [], [], math.inf
    for size in range(2, n + 1):
        for A in itertools.combinations(range(n), size):
            diam = float(dist[np.ix_(A, A)].max())
            need = res.C_G * (size / n) ** (1 / res.ddim)
            gap = diam - need
            worst = min(worst, gap)
            if gap < -INEQUALITY_SLACK:
                slack.append({"subset": A, "diameter": diam, "required": need})
            elif gap <= INEQUALITY_SLACK:
                tight.append(A)
    vals = {"C_G": res.C_G, "ddim": res.ddim, "mode": res.mode, "min_gap": worst,
            "tight_witnesses": len(tight), "witness": tight[0] if tight else None}
    rep.add(Check("isodiametric_exhaustive", not slack and bool(tight) and res.mode == "exhaustive",
                  vals, slack[:5] or None))
    return rep


# ---------------------------------------------------------------------------
# function-lattice covers


def lipschitz_lattice(points: int, step: float, M: float, lipschitz: float = 1.0, spacing: float = 1.0) -> np.ndarray:
    """All functions on a unit-spaced path with values in step * Z, |f| <= M/2, l-Lipschitz.

    Values are returned in units of ``step``.
    """
    top = int(math.floor(M / 2 / step + 1e-9))
    jump = int(math.floor(lipschitz * spacing / step + 1e-9))
    rows = [(v,) for v in range(-top, top + 1)]
    for _ in range(points - 1):
        rows = [r + (v,) for r in rows for v in range(max(-top, r[-1] - jump), min(top, r[-1] + jump) + 1)]
    return np.array(rows, dtype=np.int64)


@dataclass(frozen=True)
class LatticeCover:
    size: int
    lower: int
    centers: np.ndarray
    exact: bool
    method: str


def lattice_cover(F: np.ndarray, radius_steps: int, time_limit: float = 120.0) -> LatticeCover:
    """Minimum sup-norm cover of the lattice by its own closed balls (integer program via HiGHS)."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import csr_matrix

    k = len(F)
    rows, cols = [], []
    for s in range(0, k, 512):
        block = np.abs(F[s : s + 512, None, :] - F[None, :, :]).max(axis=2) <= radius_steps
        r, c = np.nonzero(block)
        rows.append(r + s)
        cols.append(c)
    A = csr_matrix((np.ones(sum(len(r) for r in rows)), (np.concatenate(rows), np.concatenate(cols))), shape=(k, k))
    res = milp(np.ones(k), constraints=LinearConstraint(A, lb=1), integrality=np.ones(k),
               bounds=Bounds(0, 1), options={"time_limit": time_limit})
    if res.x is None:
        raise RuntimeError(f"integer program failed: {res.message}")
    chosen = np.flatnonzero(res.x > 0.5)
    covered = np.asarray(A[:, chosen].sum(axis=1)).ravel() >= 1
    if not covered.all():
        raise RuntimeError("integer program returned a non-cover")
    dual = getattr(res, "mip_dual_bound", None)
    lower = int(math.ceil(dual - 1e-6)) if dual is not None and math.isfinite(dual) else 1
    exact = res.status == 0
    return LatticeCover(len(chosen), len(chosen) if exact else lower, F[chosen], exact, "milp")


def kt_check(points: int, eps: float, M: float = 2.0, lipschitz: float = 1.0) -> Check:
    """lower <= log2 N(F, eps) <= upper for the step-eps lattice of l-Lipschitz functions on a path."""
    Z = path_space(points)
    F = lipschitz_lattice(points, eps, M, lipschitz)
    cover = lattice_cover(F, 1)
    lower, upper = kt_sandwich(lambda r: covering_count(Z, r), M, eps, lipschitz)
    log_hi = math.log2(cover.size)
    log_lo = math.log2(cover.lower)
    ok = cover.exact and lower <= log_hi + INEQUALITY_SLACK and log_hi <= upper + INEQUALITY_SLACK
    vals = {"points": points, "eps": eps, "lattice_size": len(F), "N": cover.size, "log2_N": log_hi,
            "lower": lower, "upper": upper, "exact": cover.exact, "log2_N_lower_estimate": log_lo}
    witness = None
    if not ok:
        side = "lower" if log_hi < lower else "upper"
        witness = {"violated": side, "centers": (cover.centers * eps).tolist()[:8]}
    return Check(f"kt_path{points}_eps{eps:g}", ok, vals, witness)


def kt_suite(paths: Sequence[int] = (2, 3, 4), eps_grid: Sequence[float] = (0.25, 0.5, 1.0), M: float = 2.0) -> SuiteReport:
    rep = SuiteReport("kt")
    for p in paths:
        for eps in eps_grid:
            rep.add(kt_check(p, eps, M))
    return rep

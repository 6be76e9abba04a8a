"""Closed-form generalization, approximation and tradeoff bounds.

Rate-form bounds carry a ``constant_factor`` standing in for unspecified
universal constants. The explicit pipeline (concentration plus Dudley) has
no hidden constants and is the one used for validity checks.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .symmetry import FiniteGroup

BOUNDARY_TOL = 0.01
GOLDEN = (math.sqrt(5) - 1) / 2


class BoundError(ValueError):
    """Inputs violate a hypothesis of the requested bound."""


# ---------------------------------------------------------------------------
# inputs and reports


@dataclass(frozen=True)
class BoundInputs:
    """Every symbol entering the rate-form bounds.

    ``lam`` defaults to stab_size / group_size. ``C1``, ``C2``, ``C3`` are
    derived from the generalization constants unless supplied.
    """

    d: float = 3.0
    d_G: float = 1.0
    D: float = 1.0
    delta_G: float = 1.0
    L: float = 1.0
    L_prime: float = 1.0
    stab_size: float = 1.0
    group_size: float = 1.0
    n: float = 1000
    M: float = 1.0
    delta: float = 0.1
    eps: float = 0.0
    lam: float | None = None
    Lip_ystar: float = 0.0
    C_G: float = 1.0
    constant_factor: float = 1.0
    finite_group: bool = True
    C: float | None = None
    C1: float | None = None
    C2: float | None = None
    C3: float | None = None

    def __post_init__(self) -> None:
        for name in ("D", "delta_G", "L", "L_prime", "stab_size", "group_size", "n", "M", "constant_factor"):
            if not getattr(self, name) > 0:
                raise BoundError(f"{name} must be positive")
        if not 0 < self.delta < 2:
            raise BoundError("delta must lie in (0, 2)")
        if self.eps < 0:
            raise BoundError("eps must be nonnegative")
        for name in ("C", "C1", "C2", "C3", "C_G"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise BoundError(f"{name} must be positive")
        if self.stab_size > self.group_size:
            raise BoundError("stab_size cannot exceed group_size")
        lam = self.density
        if not 0 < lam <= 1:
            raise BoundError("lam must lie in (0, 1]")

    @property
    def d0(self) -> float:
        return self.d - self.d_G

    @property
    def density(self) -> float:
        return self.stab_size / self.group_size if self.lam is None else self.lam

    @property
    def notes(self) -> list[str]:
        out = []
        if self.delta >= 0.5:
            out.append("delta outside (0, 1/2)")
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "BoundInputs":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise BoundError(f"unknown bound input fields: {unknown}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "BoundInputs":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class BoundReport:
    """Named terms whose sum is ``total``, plus the regime that selected them."""

    terms: dict
    regime: str = ""
    flags: dict = field(default_factory=dict)
    alternatives: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))

    def to_json(self) -> dict:
        out = dict(self.terms)
        out["total"] = self.total
        out["regime"] = self.regime
        out["flags"] = dict(self.flags)
        if self.alternatives:
            out["alternatives"] = dict(self.alternatives)
        out["inputs"] = dict(self.inputs)
        return out


# ---------------------------------------------------------------------------
# explicit-constant pieces


def confidence_term(n: float, M: float, delta: float) -> float:
    """sqrt(M ln(2/delta) / n)."""
    if not 0 < delta < 2:
        raise BoundError("delta must lie in (0, 2)")
    return math.sqrt(M * math.log(2 / delta) / n)


def concentration_bound(rademacher: float, n: float, M: float, delta: float) -> float:
    """rademacher + sqrt(M ln(2/delta) / n)."""
    if not 0 < delta < 1:
        raise BoundError("delta must lie in (0, 1)")
    if rademacher < 0 or n <= 0 or M <= 0:
        raise BoundError("need rademacher >= 0, n > 0 and M > 0")
    return rademacher + confidence_term(n, M, delta)


def kt_sandwich(
    cover_Z: Callable[[float], float], M: float, eps: float, lipschitz: float = 1.0
) -> tuple[float, float]:
    """Bracket for log2 N(F, eps) over grid-free l-Lipschitz classes with range M.

    Z-cover radii are rescaled by 1/lipschitz.
    """
    if not 0 < eps <= M:
        raise BoundError("eps must lie in (0, M]")
    lower = float(cover_Z(2 * eps / lipschitz))
    upper = math.log2(M / eps + 1) + float(cover_Z(eps / (2 * lipschitz)))
    return lower, upper


def _trapezoid(h: Callable[[float], float], a: float, b: float, rtol: float) -> float:
    """Adaptive trapezoid from log-spaced starting nodes.

    An interval is accepted when halving changes its estimate by at most
    3 * rtol of its own size, so the summed error stays near rtol overall.
    """
    if b <= a:
        return 0.0
    nodes = np.geomspace(a, b, 33) if a > 0 else np.linspace(a, b, 33)
    vals = [h(float(t)) for t in nodes]
    stack = [(float(nodes[i]), float(nodes[i + 1]), vals[i], vals[i + 1], 0) for i in range(len(nodes) - 1)]
    total = 0.0
    while stack:
        x, y, fx, fy, depth = stack.pop()
        m = (x + y) / 2
        fm = h(m)
        whole = (y - x) * (fx + fy) / 2
        halves = (m - x) * (fx + fm) / 2 + (y - m) * (fm + fy) / 2
        if abs(whole - halves) <= 3 * rtol * abs(halves) or depth >= 40:
            total += halves
        else:
            stack.append((x, m, fx, fm, depth + 1))
            stack.append((m, y, fm, fy, depth + 1))
    return total


@dataclass(frozen=True)
class DudleyResult:
    value: float
    alpha: float
    integral: float


def dudley_bound(
    log_cover: Callable[[float], float], diam_F: float, n: float, rtol: float = 1e-6, detail: bool = False
):
    """4 inf_a (a + 3/sqrt(n) int_a^diam sqrt(ln N(F, t)) dt).

    ``log_cover`` returns the natural log of the sup-norm covering number.
    """
    if diam_F <= 0:
        return DudleyResult(0.0, 0.0, 0.0) if detail else 0.0
    def root(t: float) -> float:
        v = float(log_cover(t))
        if not math.isfinite(v):
            raise BoundError(f"log covering number is not finite at t={t}")
        return math.sqrt(max(v, 0.0))

    scale = 3 / math.sqrt(n)
    if root(1e-9 * diam_F) == 0.0:
        # a single ball covers at every scale; the infimum is the alpha -> 0 limit
        return DudleyResult(0.0, 0.0, 0.0) if detail else 0.0

    def objective(u: float) -> tuple[float, float]:
        a = math.exp(u)
        integral = _trapezoid(root, a, diam_F, rtol)
        return a + scale * integral, integral

    lo, hi = math.log(1e-9 * diam_F), math.log(diam_F)
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = objective(x1)[0], objective(x2)[0]
    for _ in range(80):
        if hi - lo < 1e-6:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = objective(x1)[0]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = objective(x2)[0]
    # local grid refinement and the endpoints
    width = max(hi - lo, 1e-3)
    cands = list(np.linspace(max(lo - width, math.log(1e-9 * diam_F)), min(hi + width, math.log(diam_F)), 64))
    cands += [math.log(1e-9 * diam_F), math.log(diam_F)]
    best = min((objective(u) + (u,) for u in cands), key=lambda r: r[0])
    value, integral, u = best
    res = DudleyResult(4 * value, math.exp(u), integral)
    return res if detail else res.value


# ---------------------------------------------------------------------------
# rate-form bounds


def _need(condition: bool, message: str) -> None:
    if not condition:
        raise BoundError(message)


def base_bound(inp: BoundInputs) -> BoundReport:
    """Chaining rate for the unconstrained class plus the confidence term."""
    d = inp.d
    _need(d > 2, f"requires ddim(Z) = d > 2, got d = {d}")
    chain = inp.constant_factor * (4**d * d / (d - 2)) * (inp.D**d / inp.n) ** (1 / d)
    conf = confidence_term(inp.n, inp.M, inp.delta)
    flags = {note: True for note in inp.notes}
    return BoundReport({"chaining": chain, "confidence": conf}, "base", flags, {}, inp.to_dict())


def _gen_prefix(d0: float, cf: float) -> float:
    return 4**d0 * d0 / (d0 - 2) * cf


def _e_eps(inp: BoundInputs, size: float) -> tuple[str, float, dict, dict]:
    d, d0 = inp.d, inp.d0
    _need(d0 > 2, f"requires d0 = d - d_G > 2, got d0 = {d0}")
    _need(size > 0, "stabilizer size must be positive")
    prefix = _gen_prefix(d0, inp.constant_factor)
    mass = (2 * inp.L) ** d * inp.D**d
    ratio = mass / (size * inp.n)
    finite = prefix * inp.delta_G ** (1 - d0 / 2) * math.sqrt(ratio)
    general = prefix * ratio ** (1 / d0)
    threshold = size * inp.n * inp.delta_G**d0
    finite_ok = inp.finite_group and mass < threshold
    regime = "finite" if finite_ok else "general"
    value = finite if finite_ok else general
    flags: dict = {}
    alts: dict = {}
    if inp.finite_group and abs(mass - threshold) <= BOUNDARY_TOL * threshold:
        flags["near_boundary"] = True
        alts = {"finite": finite, "general": general}
    return regime, value, flags, alts


def partial_gen_bound(inp: BoundInputs) -> BoundReport:
    """confidence + 2 eps + E_eps, with E_eps in the finite or general regime."""
    regime, e_val, flags, alts = _e_eps(inp, inp.stab_size)
    conf = confidence_term(inp.n, inp.M, inp.delta)
    flags.update({note: True for note in inp.notes})
    terms = {"confidence": conf, "two_eps": 2 * inp.eps, "E_eps": e_val}
    return BoundReport(terms, regime, flags, alts, inp.to_dict())


def exact_gen_bound(inp: BoundInputs) -> BoundReport:
    """Exactly equivariant case: the partial bound at eps = 0 with the whole group."""
    full = inp.replace(eps=0.0, stab_size=inp.group_size, lam=None)
    regime, e_val, flags, alts = _e_eps(full, full.group_size)
    conf = confidence_term(full.n, full.M, full.delta)
    flags.update({note: True for note in full.notes})
    terms = {"confidence": conf, "two_eps": 0.0, "E_eps": e_val}
    return BoundReport(terms, regime, flags, alts, full.to_dict())


def symmetry_constant(inp: BoundInputs) -> float:
    """C = C_G L' (1 + Lip(y*)) unless given directly."""
    return inp.C if inp.C is not None else inp.C_G * inp.L_prime * (1 + inp.Lip_ystar)


def approx_bound(inp: BoundInputs) -> float:
    """(max{C lambda^(1/d_G) - eps, 0})^2."""
    _need(inp.d_G > 0, "d_G = 0 leaves the exponent 1/d_G undefined")
    lam = inp.density
    _need(0 < lam <= 1, "lambda must lie in (0, 1]")
    gap = symmetry_constant(inp) * lam ** (1 / inp.d_G) - inp.eps
    return max(gap, 0.0) ** 2


@dataclass(frozen=True)
class PerfConstants:
    C1: float
    C2: float
    C3: float
    derived: bool


def perf_constants(inp: BoundInputs) -> PerfConstants:
    """C1, C2, C3 matching E_eps with |Stab| = lambda |G|, unless supplied."""
    if inp.C1 is not None and inp.C2 is not None and inp.C3 is not None:
        _need(inp.C1 > 0 and inp.C2 > 0 and inp.C3 > 0, "C1, C2, C3 must be positive")
        return PerfConstants(inp.C1, inp.C2, inp.C3, False)
    d, d0 = inp.d, inp.d0
    _need(d0 > 2, f"requires d0 = d - d_G > 2, got d0 = {d0}")
    prefix = _gen_prefix(d0, inp.constant_factor)
    mass = (2 * inp.L * inp.D) ** d / inp.group_size
    c1 = prefix * inp.delta_G ** (1 - d0 / 2) * math.sqrt(mass)
    c2 = prefix * mass ** (1 / d0)
    c3 = mass / inp.delta_G**d0
    return PerfConstants(
        inp.C1 if inp.C1 is not None else c1,
        inp.C2 if inp.C2 is not None else c2,
        inp.C3 if inp.C3 is not None else c3,
        True,
    )


def perf_bound(inp: BoundInputs) -> BoundReport:
    """confidence + 2 eps + approximation term + statistical term in the regime of n lambda."""
    lam = inp.density
    _need(lam > 0, "lambda must be positive")
    _need(inp.d_G > 0, "d_G = 0 leaves the exponent 1/d_G undefined")
    pc = perf_constants(inp)
    nl = inp.n * lam
    stat1 = pc.C1 / math.sqrt(nl)
    d0 = inp.d0
    stat2 = pc.C2 / nl ** (1 / d0) if d0 > 0 else math.inf
    regime = "sqrt" if nl >= pc.C3 else "d0"
    flags = {note: True for note in inp.notes}
    alts: dict = {}
    if abs(nl - pc.C3) <= BOUNDARY_TOL * pc.C3:
        flags["near_boundary"] = True
        alts = {"sqrt": stat1, "d0": stat2}
    terms = {
        "confidence": confidence_term(inp.n, inp.M, inp.delta) * inp.constant_factor,
        "two_eps": 2 * inp.eps,
        "approximation": approx_bound(inp),
        "statistical": stat1 if regime == "sqrt" else stat2,
    }
    return BoundReport(terms, regime, flags, alts, inp.to_dict())


def perf_curve(inp: BoundInputs, lams: Sequence[float]) -> tuple[np.ndarray, list[str]]:
    totals, regimes = [], []
    for lam in lams:
        rep = perf_bound(inp.replace(lam=float(lam)))
        totals.append(rep.total)
        regimes.append(rep.regime)
    return np.array(totals), regimes


# ---------------------------------------------------------------------------
# optimal density


def optimal_lambda(alpha: float, beta: float, C: float, C_prime: float) -> float:
    """Minimizer of C lam^alpha + C' lam^-beta over lam > 0."""
    if min(alpha, beta, C, C_prime) <= 0:
        raise BoundError("alpha, beta, C and C' must be positive")
    return ((beta / alpha) * (C_prime / C)) ** (1 / (alpha + beta))


def rate_parameters(inp: BoundInputs) -> dict:
    """Exponents and coefficients in the published parameterization of both regimes."""
    d, d0, dg = inp.d, inp.d0, inp.d_G
    C = inp.C_G * inp.Lip_ystar * inp.L_prime
    base = 2 * inp.L * inp.D
    c1p = base ** (d / 2) * inp.group_size**0.5 / inp.delta_G ** ((d0 - 2) / 2)
    c2p = base ** (d / d0) * inp.group_size ** (1 / d0)
    return {
        "sqrt": {"alpha": 1 / dg, "beta": 0.5, "C": C, "C_prime": c1p},
        "d0": {"alpha": 1 / dg, "beta": 1 / d0, "C": C, "C_prime": c2p},
    }


def tradeoff_lambda_star(inp: BoundInputs) -> dict:
    """Closed-form minimizer of the eps = 0 performance bound in each regime.

    The approximation term is C^2 lam^(2/d_G); the statistical term is
    C1 n^-1/2 lam^-1/2 or C2 n^(-1/d0) lam^(-1/d0).
    """
    pc = perf_constants(inp)
    C = symmetry_constant(inp)
    out = {}
    a = 2 / inp.d_G
    out["sqrt"] = optimal_lambda(a, 0.5, C**2, pc.C1 / math.sqrt(inp.n))
    if inp.d0 > 0:
        out["d0"] = optimal_lambda(a, 1 / inp.d0, C**2, pc.C2 / inp.n ** (1 / inp.d0))
    return out


# ---------------------------------------------------------------------------
# isodiametric constant


@dataclass(frozen=True)
class IsodiametricResult:
    C_G: float
    ddim: float
    table: list
    witness: tuple
    threshold: float
    mode: str


def _min_diameters_exhaustive(dist: np.ndarray) -> tuple[np.ndarray, list]:
    """Minimum diameter and an attaining subset for every cardinality, via subset DP."""
    n = dist.shape[0]
    size = 1 << n
    diam = np.zeros(size)
    for b in range(1, n):
        lo = 1 << b
        sub = np.arange(lo)
        # far[m] = max distance from b to members of m
        far = np.zeros(lo)
        for j in range(b):
            has = (sub >> j) & 1 == 1
            far = np.where(has, np.maximum(far, dist[b, j]), far)
        diam[lo : 2 * lo] = np.maximum(diam[:lo], far)
    counts = np.array([bin(m).count("1") for m in range(size)]) if n <= 12 else _popcounts(size)
    best = np.full(n + 1, np.inf)
    arg = [0] * (n + 1)
    for k in range(1, n + 1):
        masks = np.flatnonzero(counts == k)
        i = int(diam[masks].argmin())
        best[k] = diam[masks[i]]
        arg[k] = int(masks[i])
    return best, arg


def _popcounts(size: int) -> np.ndarray:
    counts = np.zeros(size, dtype=np.int64)
    m = np.arange(size)
    while m.any():
        counts += m & 1
        m = m >> 1
    return counts


def _min_diameters_balls(dist: np.ndarray, centers: Sequence[int] | None = None) -> tuple[np.ndarray, list]:
    """Upper estimates: first k points by distance from each center."""
    n = dist.shape[0]
    best = np.full(n + 1, np.inf)
    arg: list = [None] * (n + 1)
    for c in range(n) if centers is None else centers:
        order = np.argsort(dist[c], kind="stable")
        sub = dist[np.ix_(order, order)]
        running = np.maximum.accumulate(np.maximum.accumulate(sub, axis=0), axis=1).diagonal()
        for k in range(1, n + 1):
            if running[k - 1] < best[k]:
                best[k] = running[k - 1]
                arg[k] = tuple(int(x) for x in order[:k])
    return best, arg


def isodiametric_constant(group: FiniteGroup, cap: int = 16, ddim: float | None = None) -> IsodiametricResult:
    """Largest C with diam_min(k) >= C (k/|G|)^(1/ddim) for every k >= 2.

    Exhaustive over all subsets up to ``cap`` elements; above that the
    minimum diameters come from ball growing and C_G is an estimate.
    """
    n = group.order
    dd = group.ddim if ddim is None else ddim
    dist = group.word_dist.astype(float)
    if n <= cap:
        best, arg = _min_diameters_exhaustive(dist)
        mode = "exhaustive"
        members = [tuple(j for j in range(n) if m >> j & 1) for m in arg]
    else:
        # left translations are isometries, so balls about the identity suffice
        best, members = _min_diameters_balls(dist, [group.identity])
        mode = "balls"
    table = []
    cg, wit = math.inf, ()
    for k in range(1, n + 1):
        lam = k / n
        row = {"k": k, "lambda": lam, "min_diameter": float(best[k]), "subset": members[k]}
        if k >= 2 and dd > 0:
            row["ratio"] = float(best[k]) / lam ** (1 / dd)
            if row["ratio"] < cg:
                cg, wit = row["ratio"], members[k]
        table.append(row)
    if n < 2 or dd == 0:
        cg = 0.0
    return IsodiametricResult(cg, dd, table, tuple(group.elements[j] for j in wit), 1 / n, mode)

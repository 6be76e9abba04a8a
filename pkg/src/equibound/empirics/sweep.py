"""Seeded Monte Carlo sweeps over densities and tolerances, with CSV output."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass
from typing import Iterable, Sequence

import numpy as np

from ..bounds import BoundError, approx_bound, perf_bound
from .distributions import sample
from .errors import empirical_app_err, empirical_gen_err, explicit_gen_bound
from .scenarios import Scenario

CSV_HEADER = (
    "scenario", "lambda", "epsilon", "n", "trial", "gen_err", "app_err", "perf_err",
    "gen_bound", "app_bound", "perf_bound", "regime", "violation", "seed",
)


@dataclass(frozen=True)
class SweepRow:
    """One trial. ``gen_bound`` is the explicit-constant bound that ``violation`` tests against;
    ``perf_bound`` and ``regime`` come from the rate-form performance bound."""

    scenario: str
    lam: float
    epsilon: float
    n: int
    trial: int
    gen_err: float
    app_err: float
    perf_err: float
    gen_bound: float
    app_bound: float
    perf_bound: float
    regime: str
    violation: bool
    seed: int


def trial_seed(seed: int, grid_index: int, trial: int | None) -> int:
    """64-bit seed that depends only on (seed, grid point, trial); trial None seeds the class."""
    key = (grid_index,) if trial is None else (grid_index, trial)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class GridPoint:
    index: int
    lam: float | str | None
    eps: float
    n: int


def sweep_grid(lams: Sequence | None, epsilons: Sequence[float] | None, ns: Sequence[int]) -> list[GridPoint]:
    lams = [None] if not lams else list(lams)
    epsilons = [0.0] if not epsilons else [float(e) for e in epsilons]
    out = []
    for lam in lams:
        for eps in epsilons:
            for n in ns:
                out.append(GridPoint(len(out), lam, eps, int(n)))
    return out


def _failed_rows(scenario: Scenario, gp: GridPoint, lam: float, trials: int, seed: int, reason: str) -> list[SweepRow]:
    nan = math.nan
    return [SweepRow(scenario.name, lam, gp.eps, gp.n, t, nan, nan, nan, nan, nan, nan,
                     f"error:{reason}", False, trial_seed(seed, gp.index, t)) for t in range(trials)]


def run_sweep(
    scenario: Scenario,
    lams: Sequence | None = None,
    epsilons: Sequence[float] | None = None,
    n: int | Sequence[int] = 50,
    trials: int = 100,
    delta: float = 0.1,
    seed: int = 0,
    constant_factor: float = 1.0,
    overrides: dict | None = None,
) -> list[SweepRow]:
    """Every (grid point, trial): build the class, draw a sample, compare errors with bounds.

    The class and its bounds are fixed per grid point; only the sample is
    redrawn per trial. Construction failures yield rows flagged in the
    regime column instead of aborting the sweep.
    """
    ns = [n] if isinstance(n, (int, np.integer)) else list(n)
    rows: list[SweepRow] = []
    if trials <= 0:
        return rows
    for gp in sweep_grid(lams, epsilons, ns):
        lam = math.nan
        try:
            subset = scenario.subset_for(gp.lam)
            lam = float(subset.measure_fraction)
            cls = scenario.build(subset, gp.eps, trial_seed(seed, gp.index, None))
            app = empirical_app_err(cls, scenario.dist)
            explicit = explicit_gen_bound(cls, scenario.action, subset, gp.eps, gp.n, delta).total
            inp = scenario.bound_inputs(subset, cls, gp.eps, gp.n, delta, constant_factor, overrides)
        except (ValueError, BoundError) as exc:
            rows.extend(_failed_rows(scenario, gp, lam, trials, seed, str(exc)))
            continue
        try:
            app_b = approx_bound(inp)
        except BoundError:
            app_b = math.nan
        try:
            rep = perf_bound(inp)
            perf_b, regime = rep.total, rep.regime
        except BoundError as exc:
            perf_b, regime = math.nan, f"undefined:{exc}"
        for t in range(trials):
            s = trial_seed(seed, gp.index, t)
            smp = sample(scenario.dist, gp.n, s)
            gen = empirical_gen_err(cls, smp, scenario.dist)
            rows.append(SweepRow(scenario.name, lam, gp.eps, gp.n, t, gen, app, gen + app,
                                 explicit, app_b, perf_b, regime, bool(gen > explicit), s))
    return rows


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Iterable[SweepRow], out) -> None:
    """Comma-separated rows under the fixed header, LF line endings."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_cell(v) for v in astuple(row)])


def rows_to_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def summarize(rows: Sequence[SweepRow]) -> dict:
    """Violation rate and the density minimizing mean empirical performance error."""
    good = [r for r in rows if not r.regime.startswith("error:")]
    out = {"rows": len(rows), "errors": len(rows) - len(good)}
    if not good:
        return out | {"violation_rate": None, "argmin_lambda": None}
    out["violation_rate"] = sum(r.violation for r in good) / len(good)
    by_lam: dict = {}
    for r in good:
        by_lam.setdefault(r.lam, []).append(r.perf_err)
    means = {lam: float(np.mean(v)) for lam, v in by_lam.items()}
    out["mean_perf_err"] = {repr(k): v for k, v in sorted(means.items())}
    out["argmin_lambda"] = min(means, key=lambda k: (means[k], k))
    return out


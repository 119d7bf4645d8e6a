"""Scenario builders, regime sweeps and end-to-end checks of the predictions.

* :func:`build_r0_counterexample` constructs a two-strain model in which the strain
  with the *smaller* basic reproduction number is the only one to spread.
* :func:`sweep_regimes` maps the final susceptible level against ``S_0``
  for two strains and labels each point with its closed-form regime.
* :func:`cascade_harness` samples equal-diffusivity models and checks
  that successive invaders have decreasing transmission and recovery rates.
* :func:`verify_prediction` simulates a scenario and compares measured fronts,
  plateaus and terraces with the propagation sequences.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from multisir.errors import ContractError, DomainTooSmallError, NumericalError, ParameterError
from multisir.kinetics import (
    StrainParams,
    asymptotic_value,
    basic_reproduction_number,
    depleted_level,
    final_size_function,
    find_root,
    largest_final_size_root,
    speed,
)
from multisir.metrics import FrontReport, MeasureSettings, analyze
from multisir.sequence import (
    ModelSpec,
    PropagationOutcome,
    cascade_monotonicity,
    compute_sequence,
)
from multisir.sim import Bump, Grid, InitialData, SimConfig, simulate

REGIMES = ("no-epidemic", "only-1", "gap", "2-then-1", "only-2")


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelSpec
    sim: SimConfig
    init: InitialData = InitialData()
    measure: MeasureSettings = MeasureSettings()
    name: str = "scenario"


# ---------------------------------------------------------------------------
# canned scenarios
# ---------------------------------------------------------------------------

def single_strain_scenario(d=1.0, alpha=1.0, mu=1.0, s0=2.0, half_length=400.0, dx=0.25,
                           t_end=150.0, snapshot_dt=2.5, scheme="explicit-euler") -> ScenarioConfig:
    model = ModelSpec((StrainParams(d, alpha, mu),), s0)
    sim = SimConfig(Grid.from_spacing(half_length, dx), t_end=t_end, snapshot_dt=snapshot_dt,
                    scheme=scheme)
    return ScenarioConfig(model, sim, measure=MeasureSettings(burn_in=20.0), name="single-strain")


def terrace_scenario(scheme="explicit-euler") -> ScenarioConfig:
    """Two strains that both spread, fast one first, with wide hypothesis margins.

    Strain 1 (d=12, alpha=4, mu=3) invades at speed 6.93 and lowers S from 1
    to about 0.546; strain 2 (d=1, alpha=11/3, mu=1) follows at speed 2.0
    and leaves about 0.111. Near the origin strain 2 initially grows on the
    untouched level, so terraces are measured beyond ``|x| = 45``.
    """
    model = ModelSpec((StrainParams(12.0, 4.0, 3.0), StrainParams(1.0, 11.0 / 3.0, 1.0)), 1.0)
    sim = SimConfig(Grid.from_spacing(400.0, 0.25), t_end=55.0, snapshot_dt=1.25, scheme=scheme)
    measure = MeasureSettings(burn_in=10.0, delta=45.0)
    return ScenarioConfig(model, sim, measure=measure, name="two-strain-terrace")


def r0_counterexample_scenario(alpha1=4.0, mu1=4.0, s0=2.0, half_length=300.0, dx=0.25,
                        t_end=50.0) -> ScenarioConfig:
    """Simulation set-up for the model returned by :func:`build_r0_counterexample`.

    The default rates are four times the unit case so that strain 2 decays
    four times faster behind the front of strain 1.
    """
    model = build_r0_counterexample(alpha1, mu1, s0).model
    sim = SimConfig(Grid.from_spacing(half_length, dx), t_end=t_end, snapshot_dt=1.25)
    measure = MeasureSettings(burn_in=10.0, delta=25.0)
    return ScenarioConfig(model, sim, measure=measure, name="r0-counterexample")


# ---------------------------------------------------------------------------
# larger reproduction number that still dies out
# ---------------------------------------------------------------------------

@dataclass
class R0Counterexample:
    model: ModelSpec
    s1: float
    lam: float
    lam_interval: tuple
    eps: float
    outcome: PropagationOutcome
    trace: List[dict] = field(default_factory=list)

    @property
    def r0(self) -> tuple:
        return tuple(basic_reproduction_number(p, self.model.s0) for p in self.model.strains)


def build_r0_counterexample(alpha1: float, mu1: float, s0: float, d: float = 1.0,
                     max_halvings: int = 60) -> R0Counterexample:
    """Two-strain model where the strain with larger R0 goes extinct.

    Strain 2 gets ``alpha2 = eps * lam`` and ``mu2 = eps`` with ``lam`` the
    midpoint of ``(alpha1/mu1, 1/S1)`` and ``eps`` the first of
    ``1, 1/2, 1/4, ...`` for which strain 2 grows slower than strain 1 on
    ``s0`` and both theorem hypotheses hold with strain 1 alone spreading.
    """
    strain1 = StrainParams(d, alpha1, mu1)
    if not alpha1 * s0 > mu1:
        raise ContractError(f"need alpha1 * s0 / mu1 > 1, got {alpha1 * s0 / mu1!r}")
    rho1 = asymptotic_value(strain1, s0)
    s1 = depleted_level(strain1, s0, rho1)
    lo, hi = alpha1 / mu1, 1.0 / s1
    assert lo < hi, "depleted level must fall below mu1/alpha1"
    lam = 0.5 * (lo + hi)
    trace = []
    eps = 1.0
    for _ in range(max_halvings):
        growth_gap = eps * (lam * s0 - 1.0) < alpha1 * s0 - mu1
        model = ModelSpec((strain1, StrainParams(d, eps * lam, eps)), s0)
        outcome = compute_sequence(model)
        ok = growth_gap and outcome.indices == [1] and outcome.theorem_applicable
        trace.append({"eps": eps, "growth_gap": growth_gap, "indices": list(outcome.indices),
                      "theorem_applicable": outcome.theorem_applicable, "accepted": ok})
        if ok:
            return R0Counterexample(model, s1, lam, (lo, hi), eps, outcome, trace)
        eps *= 0.5
    raise NumericalError("no admissible eps found in the geometric scan", state={"trace": trace})


# ---------------------------------------------------------------------------
# cascade of decreasing rates
# ---------------------------------------------------------------------------

@dataclass
class CascadeHarnessResult:
    instances: List[tuple]
    violations: List[tuple]
    draws: int

    @property
    def passed(self) -> bool:
        return not self.violations


def random_equal_d_model(rng: random.Random, n_min=2, n_max=5) -> ModelSpec:
    n = rng.randint(n_min, n_max)
    d = math.exp(rng.uniform(-1.0, 1.0))
    s0 = math.exp(rng.uniform(-1.0, 1.5))
    strains = []
    for _ in range(n):
        mu = math.exp(rng.uniform(-3.0, 1.0))
        alpha = mu / s0 * math.exp(rng.uniform(-0.5, 3.0))
        strains.append(StrainParams(d, alpha, mu))
    return ModelSpec(tuple(strains), s0)


def cascade_harness(n_instances: int = 100, seed: int = 0, max_draws: int = 1_000_000) -> CascadeHarnessResult:
    """Sample until ``n_instances`` models have ``p >= 2`` with the theorem applicable."""
    rng = random.Random(seed)
    found, violations, draws = [], [], 0
    while len(found) < n_instances:
        if draws >= max_draws:
            raise NumericalError(f"only {len(found)} admissible instances in {draws} draws")
        draws += 1
        model = random_equal_d_model(rng)
        outcome = compute_sequence(model)
        if outcome.p < 2 or not outcome.theorem_applicable:
            continue
        chains = cascade_monotonicity(outcome, model)
        found.append((model, outcome, chains))
        if not chains.decreasing:
            violations.append((model, outcome, chains))
    return CascadeHarnessResult(found, violations, draws)


# ---------------------------------------------------------------------------
# two-strain regime map: final size against the initial susceptible level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeConstants:
    """Closed-form regime boundaries for two strains.

    ``strain1`` is the one with the lower threshold ``mu/alpha`` after
    relabelling; ``relabelled`` tells whether the input order was swapped.
    ``s_lower``, ``s_upper`` and ``eps`` are ``None`` when
    ``d2 alpha2 <= d1 alpha1`` (strain 1 always at least as fast).
    """

    strain1: StrainParams
    strain2: StrainParams
    relabelled: bool
    r_lower: float
    s_lower: Optional[float]
    s_upper: float
    eps: Optional[float]
    eps_applicable: bool
    gap_upper: Optional[float]

    @property
    def threshold1(self) -> float:
        return self.strain1.threshold

    def boundaries(self) -> List[float]:
        out = [self.threshold1]
        if self.s_lower is not None:
            out.append(self.s_lower)
            if self.s_upper > self.s_lower:
                out.append(min(self.gap_upper, self.s_upper))
            out.append(self.s_upper)
        return sorted(set(out))


def _separation_holds(p1: StrainParams, p2: StrainParams, s0: float) -> bool:
    rho2 = asymptotic_value(p2, s0)
    if rho2 is None:
        return False
    s1 = depleted_level(p2, s0, rho2)
    return speed(p1, s0) + speed(p1, s1) < speed(p2, s0)


def _scan_gap_upper(p1, p2, s_lower, s_upper, points=2000) -> float:
    """Largest ``S0`` in ``(s_lower, s_upper)`` where separation still fails."""
    grid = np.linspace(s_lower, s_upper, points + 2)[1:-1]
    holds = [_separation_holds(p1, p2, s) for s in grid]
    if not any(holds):
        return s_upper
    failing = [i for i, h in enumerate(holds) if not h]
    if not failing:
        return s_lower
    i = failing[-1]
    if i + 1 >= len(grid):
        return s_upper
    a, b = grid[i], grid[i + 1]
    for _ in range(100):
        m = 0.5 * (a + b)
        if _separation_holds(p1, p2, m):
            b = m
        else:
            a = m
    return b


def regime_constants(params1: StrainParams, params2: StrainParams) -> RegimeConstants:
    if params1.threshold == params2.threshold:
        raise ParameterError("the two strains must have different thresholds mu/alpha")
    relabelled = params1.threshold > params2.threshold
    p1, p2 = (params2, params1) if relabelled else (params1, params2)
    r_lower = p1.alpha / p2.alpha
    level = final_size_function(p1.threshold, p2.threshold)
    s_upper = largest_final_size_root(level, p2.threshold)
    if p2.d * p2.alpha <= p1.d * p1.alpha:
        return RegimeConstants(p1, p2, relabelled, r_lower, None, s_upper, None, False, None)
    s_lower = (p2.d * p2.mu - p1.d * p1.mu) / (p2.d * p2.alpha - p1.d * p1.alpha)
    eps_applicable = p2.d * p2.alpha > 4.0 * p1.d * p1.alpha
    if eps_applicable:
        eps = (3.0 * p2.d * p1.d * (p2.mu * p1.alpha - p1.mu * p2.alpha)
               / ((p2.d * p2.alpha - 4.0 * p1.d * p1.alpha) * (p2.d * p2.alpha - p1.d * p1.alpha)))
        gap_upper = s_lower + eps
    else:
        eps = None
        gap_upper = _scan_gap_upper(p1, p2, s_lower, s_upper) if s_upper > s_lower else s_lower
    return RegimeConstants(p1, p2, relabelled, r_lower, s_lower, s_upper, eps,
                               eps_applicable, gap_upper)


def closed_form_regime(c: RegimeConstants, s0: float) -> str:
    """Regime of ``s0`` from the closed-form constants alone."""
    if s0 <= c.threshold1:
        return "no-epidemic"
    if c.s_lower is None or s0 < c.s_lower:
        return "only-1"
    if s0 >= c.s_upper and s0 > c.s_lower:
        return "only-2"
    if s0 <= c.gap_upper:
        return "gap"
    return "2-then-1"


def sequence_regime(outcome: PropagationOutcome, relabelled: bool = False) -> str:
    """Regime read off a computed propagation sequence (labels after relabelling)."""
    if not outcome.theorem_applicable:
        return "gap"
    ks = list(outcome.indices)
    if relabelled:
        ks = [3 - k for k in ks]
    if not ks:
        return "no-epidemic"
    if ks == [1]:
        return "only-1"
    if ks == [2]:
        return "only-2"
    if ks == [2, 1]:
        return "2-then-1"
    return "gap"


@dataclass
class SweepPoint:
    s0: float
    regime: str
    regime_sequence: str
    outcome: PropagationOutcome
    refined: bool = False
    s_inf_measured: Optional[float] = None

    @property
    def s_inf_analytic(self) -> float:
        return self.outcome.s_infinity

    @property
    def agrees(self) -> bool:
        return self.regime == self.regime_sequence


@dataclass
class SweepResult:
    params1: StrainParams
    params2: StrainParams
    constants: RegimeConstants
    points: List[SweepPoint]

    @property
    def s0(self) -> np.ndarray:
        return np.array([p.s0 for p in self.points])

    @property
    def s_inf(self) -> np.ndarray:
        return np.array([p.s_inf_analytic for p in self.points])

    def disagreements(self, outside_gap: bool = True) -> List[SweepPoint]:
        return [p for p in self.points if not p.agrees and not (outside_gap and p.regime == "gap")]


def _sweep_point(args) -> SweepPoint:
    p1, p2, consts, s0, tie_tol, refined = args
    model = ModelSpec((p1, p2), s0)
    outcome = compute_sequence(model, tie_tol)
    return SweepPoint(s0, closed_form_regime(consts, s0), sequence_regime(outcome, consts.relabelled),
                      outcome, refined)


def default_sweep_range(consts: RegimeConstants) -> tuple:
    top = max(b for b in consts.boundaries())
    return 0.5 * consts.threshold1, 1.5 * top


def sweep_regimes(
    params1: StrainParams,
    params2: StrainParams,
    s0_grid: Optional[Sequence[float]] = None,
    points: int = 200,
    refine: bool = True,
    refine_factor: int = 5,
    tie_tol: float = 1e-9,
    jobs: int = 1,
) -> SweepResult:
    """Label each ``S0`` of the grid and cross-check with the sequence recursion.

    When ``refine`` is set, every interval of the base grid whose end labels
    differ is subdivided ``refine_factor`` times.
    """
    consts = regime_constants(params1, params2)
    if s0_grid is None:
        lo, hi = default_sweep_range(consts)
        s0_grid = np.linspace(lo, hi, points)
    grid = [float(s) for s in s0_grid]
    if not grid:
        raise ParameterError("empty S0 grid")
    if any(not (math.isfinite(s) and s > 0) for s in grid):
        raise ParameterError("S0 grid values must be finite and > 0")
    # strains keep the caller's numbering inside each model
    p1, p2 = params1, params2
    base = _map(_sweep_point, [(p1, p2, consts, s, tie_tol, False) for s in grid], jobs)
    out = list(base)
    if refine and refine_factor > 1:
        extra = []
        for a, b in zip(base, base[1:]):
            if a.regime != b.regime:
                for j in range(1, refine_factor):
                    extra.append(a.s0 + (b.s0 - a.s0) * j / refine_factor)
        out += _map(_sweep_point, [(p1, p2, consts, s, tie_tol, True) for s in extra], jobs)
        out.sort(key=lambda p: p.s0)
    return SweepResult(params1, params2, consts, out)


def _map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def representatives(sweep: SweepResult, per_regime: int = 5) -> List[int]:
    """Indices of up to ``per_regime`` evenly spread base points per verifiable regime."""
    chosen = []
    for regime in REGIMES:
        if regime == "gap":
            continue
        idx = [i for i, p in enumerate(sweep.points) if p.regime == regime and not p.refined]
        if not idx:
            continue
        take = min(per_regime, len(idx))
        picks = np.linspace(0, len(idx) - 1, take + 2)[1:-1] if take < len(idx) else range(len(idx))
        chosen += sorted({idx[int(round(j))] for j in picks})
    return sorted(chosen)


def _measure_point(args):
    model, sim, init, measure = args
    try:
        traj = simulate(sim, model, init)
    except (DomainTooSmallError, NumericalError):
        return None
    outcome = compute_sequence(model, measure.tie_tol)
    return analyze(traj, outcome, measure).s_infinity


def attach_measurements(sweep: SweepResult, sim: SimConfig, init: InitialData = InitialData(),
                        measure: MeasureSettings = MeasureSettings(), per_regime: int = 5,
                        jobs: int = 1) -> SweepResult:
    """Simulate representative points and record their measured ``S_inf``."""
    idx = representatives(sweep, per_regime)
    args = [(ModelSpec((sweep.params1, sweep.params2), sweep.points[i].s0), sim, init, measure)
            for i in idx]
    for i, value in zip(idx, _map(_measure_point, args, jobs)):
        sweep.points[i].s_inf_measured = value
    return sweep


# ---------------------------------------------------------------------------
# end-to-end verification
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class VerificationReport:
    status: str  # "pass", "mismatch", "inapplicable"
    outcome: PropagationOutcome
    checks: List[Check] = field(default_factory=list)
    report: Optional[FrontReport] = None
    trajectory: object = None
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "outcome": self.outcome.to_dict(),
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "report": self.report.to_dict() if self.report is not None else None,
        }


def _within(measured, analytic, rtol) -> bool:
    return measured is not None and abs(measured - analytic) <= rtol * abs(analytic)


def compare(report: FrontReport, outcome: PropagationOutcome, measure: MeasureSettings) -> List[Check]:
    checks = [Check(
        "partition",
        report.partition_matches,
        f"predicted {sorted(report.predicted_propagating)}, measured {sorted(report.measured_propagating)}",
    )]
    by_strain = {r.strain: r for r in report.strains}
    for i, k in enumerate(outcome.indices):
        r = by_strain[k]
        c = outcome.speeds[i]
        lo, hi = c * (1 - measure.speed_tol_low), c * (1 + measure.speed_tol_high)
        ok = r.speed is not None and lo <= r.speed <= hi
        checks.append(Check(f"speed[{k}]", ok, f"measured {r.speed!r}, accepted [{lo:.6g}, {hi:.6g}]"))
        ok = _within(r.plateau, outcome.values[i], measure.value_rtol)
        checks.append(Check(f"plateau[{k}]", ok, f"measured {r.plateau!r}, analytic {outcome.values[i]:.6g}"))
    for j, (m, a) in enumerate(zip(report.terraces, outcome.levels)):
        ok = _within(m, a, measure.value_rtol)
        checks.append(Check(f"terrace[{j}]", ok, f"measured {m!r}, analytic {a:.6g}"))
    if len(report.terraces) != len(outcome.levels):
        checks.append(Check("terrace-count", False,
                            f"measured {len(report.terraces)} levels, predicted {len(outcome.levels)}"))
    ok = _within(report.s_infinity, outcome.s_infinity, measure.value_rtol)
    checks.append(Check("s_infinity", ok, f"measured {report.s_infinity!r}, analytic {outcome.s_infinity:.6g}"))
    for r in report.strains:
        if r.strain in outcome.extinct and r.envelope is not None:
            checks.append(Check(f"envelope[{r.strain}]", r.envelope.passed,
                                f"worst ratio {r.envelope.worst_ratio:.6g} at t={r.envelope.worst_t:.6g}"))
    return checks


def verify_prediction(scenario: ScenarioConfig, keep_trajectory: bool = False) -> VerificationReport:
    """Simulate ``scenario`` and compare with its propagation sequences.

    Does not simulate when the theorem hypotheses fail (status
    ``"inapplicable"``). Mismatches are reported, not raised.
    """
    outcome = compute_sequence(scenario.model, scenario.measure.tie_tol)
    if not outcome.theorem_applicable:
        reasons = []
        if outcome.ties:
            reasons.append("tie between strains " + ", ".join(
                str(list(t.strains)) for t in outcome.ties))
        if not outcome.separation_ok:
            reasons.append("speed separation fails")
        if not outcome.subcritical_ok:
            reasons.append("subcriticality fails")
        return VerificationReport("inapplicable", outcome, reason="; ".join(reasons))
    traj = simulate(scenario.sim, scenario.model, scenario.init)
    report = analyze(traj, outcome, scenario.measure)
    checks = compare(report, outcome, scenario.measure)
    status = "pass" if all(c.passed for c in checks) else "mismatch"
    return VerificationReport(status, outcome, checks, report, traj if keep_trajectory else None)

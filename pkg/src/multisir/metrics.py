"""Measurements on simulated fields: fronts, plateaus, terraces, envelopes.

The estimators operate on plain arrays (times, cell centres, field history)
so they can be exercised on synthetic data; :func:`analyze` wires them to a
:class:`~multisir.sim.Trajectory` and a predicted
:class:`~multisir.sequence.PropagationOutcome`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from multisir.errors import InsufficientDataError
from multisir.kinetics import speed as speed_fn
from multisir.sequence import PropagationOutcome

MIN_FIT_POINTS = 6


@dataclass(frozen=True)
class MeasureSettings:
    """Knobs of the measurement pipeline.

    ``delta`` defaults to the initial support radius plus ten cells;
    ``fit_start`` defaults to the later of ``burn_in`` and half the run.
    """

    burn_in: float = 10.0
    fit_start: Optional[float] = None
    delta: Optional[float] = None
    margin: float = 0.2
    extinction_level: float = 1e-2
    stall_cells: int = 10
    epsilon: float = 0.05
    envelope_safety: float = 10.0
    tie_tol: float = 1e-9
    speed_tol_low: float = 0.05
    speed_tol_high: float = 0.02
    value_rtol: float = 0.02

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FrontTrack:
    strain: int
    level: float
    times: np.ndarray
    positions: np.ndarray
    speed: Optional[float] = None
    intercept: Optional[float] = None
    r_squared: Optional[float] = None
    window: Optional[tuple] = None
    crossed: bool = True

    @property
    def last_position(self) -> float:
        finite = self.positions[np.isfinite(self.positions)]
        return float(finite[-1]) if finite.size else float("nan")


def crossing_position(x: np.ndarray, values: np.ndarray, level: float) -> float:
    """Rightmost point where ``values`` falls through ``level`` (linear interpolation).

    Returns NaN when ``level`` is never reached or when the crossing lies
    beyond the last cell.
    """
    above = np.nonzero(values >= level)[0]
    if above.size == 0:
        return float("nan")
    j = above[-1]
    if j == values.size - 1:
        return float("nan")
    v0, v1 = values[j], values[j + 1]
    return float(x[j] + (v0 - level) / (v0 - v1) * (x[j + 1] - x[j]))


def track_front(
    times: Sequence[float],
    x: np.ndarray,
    history: np.ndarray,
    level: float,
    burn_in: float = 0.0,
    fit_start: Optional[float] = None,
    fit_end: Optional[float] = None,
    strain: int = 0,
) -> FrontTrack:
    """Follow the rightmost ``level`` crossing and fit a line to it.

    ``history`` has one row per time. A level never crossed after
    ``burn_in`` gives ``crossed=False`` and no speed.

    Raises:
        InsufficientDataError: fewer than six finite positions in the window.
    """
    times = np.asarray(times, dtype=float)
    positions = np.array([crossing_position(x, row, level) for row in history])
    after = times >= burn_in
    if not np.isfinite(positions[after]).any():
        return FrontTrack(strain, level, times, positions, crossed=False)
    t_a = max(burn_in, fit_start if fit_start is not None else 0.5 * times[-1])
    t_b = times[-1] if fit_end is None else fit_end
    sel = (times >= t_a) & (times <= t_b) & np.isfinite(positions)
    if sel.sum() < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"strain {strain}: {int(sel.sum())} usable front positions in [{t_a}, {t_b}], "
            f"need {MIN_FIT_POINTS}"
        )
    fit = stats.linregress(times[sel], positions[sel])
    return FrontTrack(
        strain=strain,
        level=level,
        times=times,
        positions=positions,
        speed=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue ** 2),
        window=(float(t_a), float(t_b)),
    )


@dataclass(frozen=True)
class WindowAverage:
    value: float
    lo: float
    hi: float


def window_average(x: np.ndarray, values: np.ndarray, lo: float, hi: float) -> WindowAverage:
    """Mean of ``values`` over cells with ``lo < |x| < hi``."""
    sel = (np.abs(x) > lo) & (np.abs(x) < hi)
    if not sel.any():
        raise InsufficientDataError(f"empty averaging window {lo!r} < |x| < {hi!r}")
    return WindowAverage(float(values[sel].mean()), float(lo), float(hi))


def plateau_value(x, values, front_position, delta, margin=0.2) -> WindowAverage:
    """Average of a field over ``delta < |x| < front - margin * front``."""
    return window_average(x, values, delta, front_position * (1.0 - margin))


def measure_s_infinity(x, S, slowest_front, delta, margin=0.2) -> WindowAverage:
    """Susceptible level behind the slowest front.

    With no propagating front the far field ``max(delta, L/2) < |x|`` is used.
    """
    if slowest_front is None:
        half = float(np.max(np.abs(x)))
        return window_average(x, S, max(delta, 0.5 * half), math.inf)
    return plateau_value(x, S, slowest_front, delta, margin)


def measure_terraces(x, S, fronts: Sequence[float], delta, margin=0.2) -> List[WindowAverage]:
    """Susceptible levels ahead of, between, and behind ordered fronts.

    ``fronts`` is sorted from the outermost (fastest) to the innermost.
    Returns ``p + 1`` averages; the first one covers the outer half of the
    region between the leading front and the domain edge.
    """
    half = float(np.max(np.abs(x))) + 1e-12
    lead = fronts[0] if fronts else delta
    out = [window_average(x, S, lead + 0.5 * (half - lead), half)]
    for outer, inner in zip(fronts, fronts[1:]):
        out.append(window_average(x, S, inner * (1.0 + margin), outer * (1.0 - margin)))
    if fronts:
        out.append(plateau_value(x, S, fronts[-1], delta, margin))
    return out


@dataclass
class EnvelopeCheck:
    passed: bool
    amplitude: float
    rate: float
    velocity: float
    worst_ratio: float
    worst_t: float
    worst_x: float

    @property
    def margin(self) -> float:
        return 1.0 - self.worst_ratio


def envelope_check(
    times: Sequence[float],
    x: np.ndarray,
    history: np.ndarray,
    front_speed: float,
    d: float,
    epsilon: float = 0.05,
    burn_in: float = 0.0,
    amplitude: Optional[float] = None,
    safety: float = 10.0,
    rtol: float = 1e-12,
) -> EnvelopeCheck:
    """Check ``I(t, x) <= A exp(-(c + eps)/(2d) (|x| - (c + eps) t))`` after burn-in.

    When ``amplitude`` is omitted, ``A`` is the smallest constant that makes
    the bound hold at the first snapshot at or after ``burn_in``, multiplied
    by ``safety``. Comparisons are done in log space.
    """
    times = np.asarray(times, dtype=float)
    v = front_speed + epsilon
    rate = v / (2.0 * d)
    idx = np.nonzero(times >= burn_in)[0]
    if idx.size == 0:
        raise InsufficientDataError("no snapshot after burn-in")
    absx = np.abs(x)

    def log_ratio(row, t):
        # log(I / shape); -inf where I == 0
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(row, 0.0)) + rate * (absx - v * t)

    if amplitude is None:
        lr = log_ratio(history[idx[0]], times[idx[0]])
        amplitude = safety * math.exp(float(lr.max())) if np.isfinite(lr.max()) else 0.0
    log_a = math.log(amplitude) if amplitude > 0 else -math.inf
    worst, worst_t, worst_x = -math.inf, float("nan"), float("nan")
    for i in idx:
        lr = log_ratio(history[i], times[i]) - log_a
        j = int(np.argmax(lr))
        if lr[j] > worst:
            worst, worst_t, worst_x = float(lr[j]), float(times[i]), float(x[j])
    worst_ratio = math.exp(worst) if worst > -math.inf else 0.0
    return EnvelopeCheck(
        passed=worst_ratio <= 1.0 + rtol,
        amplitude=amplitude,
        rate=rate,
        velocity=v,
        worst_ratio=worst_ratio,
        worst_t=worst_t,
        worst_x=worst_x,
    )


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class StrainReport:
    strain: int
    verdict: str
    speed: Optional[float] = None
    r_squared: Optional[float] = None
    plateau: Optional[float] = None
    plateau_window: Optional[tuple] = None
    front_position: Optional[float] = None
    level: Optional[float] = None
    fit_window: Optional[tuple] = None
    i_decay: float = float("nan")
    envelope: Optional[EnvelopeCheck] = None
    analytic_speed: Optional[float] = None
    analytic_plateau: Optional[float] = None

    @property
    def speed_delta(self) -> Optional[float]:
        if self.speed is None or not self.analytic_speed:
            return None
        return self.speed / self.analytic_speed - 1.0

    @property
    def plateau_delta(self) -> Optional[float]:
        if self.plateau is None or not self.analytic_plateau:
            return None
        return self.plateau / self.analytic_plateau - 1.0


@dataclass
class FrontReport:
    strains: List[StrainReport]
    s_infinity: float
    s_infinity_window: tuple
    terraces: List[float]
    analytic_s_infinity: float
    analytic_terraces: List[float]
    predicted_propagating: List[int]
    delta: float
    tracks: Dict[int, FrontTrack] = field(default_factory=dict, repr=False)

    @property
    def measured_propagating(self) -> List[int]:
        return [r.strain for r in self.strains if r.verdict == "propagates"]

    @property
    def partition_matches(self) -> bool:
        return set(self.measured_propagating) == set(self.predicted_propagating)

    @property
    def s_infinity_delta(self) -> float:
        return self.s_infinity / self.analytic_s_infinity - 1.0

    def to_dict(self) -> dict:
        def strain_dict(r: StrainReport):
            d = {
                "strain": r.strain,
                "verdict": r.verdict,
                "speed": r.speed,
                "r_squared": r.r_squared,
                "plateau": r.plateau,
                "plateau_window": list(r.plateau_window) if r.plateau_window else None,
                "front_position": r.front_position,
                "level": r.level,
                "fit_window": list(r.fit_window) if r.fit_window else None,
                "i_decay": r.i_decay,
                "analytic_speed": r.analytic_speed,
                "analytic_plateau": r.analytic_plateau,
                "speed_delta": r.speed_delta,
                "plateau_delta": r.plateau_delta,
                "envelope": None,
            }
            if r.envelope is not None:
                e = r.envelope
                d["envelope"] = {
                    "passed": e.passed, "amplitude": e.amplitude, "rate": e.rate,
                    "velocity": e.velocity, "worst_ratio": e.worst_ratio,
                    "worst_t": e.worst_t, "worst_x": e.worst_x,
                }
            return d

        return {
            "strains": [strain_dict(r) for r in self.strains],
            "s_infinity": self.s_infinity,
            "s_infinity_window": list(self.s_infinity_window),
            "analytic_s_infinity": self.analytic_s_infinity,
            "s_infinity_delta": self.s_infinity_delta,
            "terraces": list(self.terraces),
            "analytic_terraces": list(self.analytic_terraces),
            "predicted_propagating": list(self.predicted_propagating),
            "measured_propagating": self.measured_propagating,
            "partition_matches": self.partition_matches,
            "delta": self.delta,
        }

    def to_json(self) -> str:
        return json.dumps(_finite_or_none(self.to_dict()), indent=2, sort_keys=True)

    def comparison_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strain", "analytic_c", "measured_c", "analytic_rho", "measured_rho",
                    "predicted", "measured"])
        predicted = set(self.predicted_propagating)
        for r in self.strains:
            w.writerow([
                r.strain,
                _fmt(r.analytic_speed),
                _fmt(r.speed),
                _fmt(r.analytic_plateau),
                _fmt(r.plateau),
                "propagates" if r.strain in predicted else "extinct",
                r.verdict,
            ])
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else format(v, ".17g")


def _finite_or_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    return obj


def default_delta(traj) -> float:
    return max(b.support_radius() for b in traj.bumps) + 10.0 * traj.grid.dx


def _measure_strain(traj, k, settings, delta, times, x) -> tuple:
    """Return (StrainReport, FrontTrack or None) for strain ``k``."""
    R = traj.recovered(k)
    I = traj.infected(k)
    i0 = float(I[0].max())
    rep = StrainReport(strain=k, verdict="extinct",
                       i_decay=float(I[-1].max()) / i0 if i0 > 0 else float("nan"))
    far = np.abs(x) > delta
    peak = float(R[-1][far].max()) if far.any() else 0.0
    if peak < settings.extinction_level:
        return rep, None
    dx = traj.grid.dx
    # pass 1: provisional plateau from the half-peak crossing
    track = track_front(times, x, R, 0.5 * peak, settings.burn_in, settings.fit_start, strain=k)
    if not track.crossed or not np.isfinite(track.last_position):
        return rep, track
    try:
        provisional = plateau_value(x, R[-1], track.last_position, delta, settings.margin)
    except InsufficientDataError:
        return rep, track
    # pass 2: re-track at half the plateau
    track = track_front(times, x, R, 0.5 * provisional.value, settings.burn_in,
                        settings.fit_start, strain=k)
    if not track.crossed or track.speed is None:
        return rep, track
    t_a, t_b = track.window
    sel = (times >= t_a) & (times <= t_b) & np.isfinite(track.positions)
    moved = track.positions[sel][-1] - track.positions[sel][0]
    if moved < settings.stall_cells * dx:
        return rep, track
    plateau = plateau_value(x, R[-1], track.last_position, delta, settings.margin)
    rep.verdict = "propagates"
    rep.speed = track.speed
    rep.r_squared = track.r_squared
    rep.plateau = plateau.value
    rep.plateau_window = (plateau.lo, plateau.hi)
    rep.front_position = track.last_position
    rep.level = track.level
    rep.fit_window = track.window
    return rep, track


def analyze(traj, outcome: PropagationOutcome, settings: MeasureSettings = MeasureSettings()) -> FrontReport:
    """Measure every strain of ``traj`` and compare with ``outcome``."""
    x = traj.x
    times = traj.times
    delta = settings.delta if settings.delta is not None else default_delta(traj)
    model = traj.model
    reports, tracks = [], {}
    for k in range(1, model.n + 1):
        rep, track = _measure_strain(traj, k, settings, delta, times, x)
        if track is not None:
            tracks[k] = track
        if k in outcome.indices:
            i = outcome.indices.index(k)
            rep.analytic_speed = outcome.speeds[i]
            rep.analytic_plateau = outcome.values[i]
        if rep.verdict == "extinct":
            params = model.strain(k)
            c = speed_fn(params, outcome.s_infinity)
            try:
                rep.envelope = envelope_check(
                    times, x, traj.infected(k), c, params.d, settings.epsilon,
                    settings.burn_in, safety=settings.envelope_safety,
                )
            except InsufficientDataError:
                rep.envelope = None
        reports.append(rep)
    propagating = sorted(
        (r for r in reports if r.verdict == "propagates"), key=lambda r: -r.front_position
    )
    fronts = [r.front_position for r in propagating]
    S = traj.final.S
    s_inf = measure_s_infinity(x, S, fronts[-1] if fronts else None, delta, settings.margin)
    terraces = measure_terraces(x, S, fronts, delta, settings.margin) if fronts else [s_inf]
    return FrontReport(
        strains=reports,
        s_infinity=s_inf.value,
        s_infinity_window=(s_inf.lo, s_inf.hi),
        terraces=[w.value for w in terraces],
        analytic_s_infinity=outcome.s_infinity,
        analytic_terraces=list(outcome.levels),
        predicted_propagating=list(outcome.indices),
        delta=delta,
        tracks=tracks,
    )

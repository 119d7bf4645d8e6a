"""Method-of-lines integrator for the multi-strain diffusive SIR system.

On a truncated interval ``[-L, L]`` with zero-flux ends the fields evolve as

    dS/dt   = -S * sum_k alpha_k I_k
    dI_k/dt = d_k I_k'' + (alpha_k S - mu_k) I_k
    dR_k/dt = mu_k I_k

Two fixed-step schemes are offered. ``explicit-euler`` advances everything
with forward Euler and a second-order centred Laplacian. ``strang-split``
alternates half steps of the local kinetics (solved in closed form with the
susceptible level frozen) with a full explicit diffusion step; its
susceptible update uses the exponential product identity, so
``S = S0 prod_k exp(-alpha_k R_k / mu_k)`` holds to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from multisir.errors import (
    DivergenceError,
    DomainTooSmallError,
    IntegrityError,
    NumericalError,
    ParameterError,
)
from multisir.sequence import ModelSpec

SCHEMES = ("explicit-euler", "strang-split")
SHAPES = ("plateau", "cosine-bump")
CLAMP_TOL = 1e-14
REACTION_LIMIT = 0.1
GUARD_CELLS = 10
GUARD_FRACTION = 0.01
DEFAULT_AMPLITUDE_FRACTION = 1e-3
DEFAULT_HALF_WIDTH_CELLS = 10


@dataclass(frozen=True)
class Grid:
    """Cell-centred uniform grid on ``[-half_length, half_length]``."""

    half_length: float
    n_cells: int

    def __post_init__(self):
        if not (math.isfinite(self.half_length) and self.half_length > 0):
            raise ParameterError(f"half_length must be > 0, got {self.half_length!r}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 64 or self.n_cells % 2:
            raise ParameterError(f"n_cells must be an even integer >= 64, got {self.n_cells!r}")
        object.__setattr__(self, "half_length", float(self.half_length))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / self.n_cells

    @property
    def x(self) -> np.ndarray:
        # half-integer offsets keep the centres exactly symmetric about 0
        return (np.arange(self.n_cells) - (self.n_cells - 1) / 2.0) * self.dx

    @classmethod
    def from_spacing(cls, half_length: float, dx: float) -> "Grid":
        n = int(round(2.0 * half_length / dx))
        return cls(half_length, n + (n % 2))


@dataclass(frozen=True)
class Bump:
    """Compactly supported initial profile of one infectious field."""

    center: float = 0.0
    half_width: Optional[float] = None
    amplitude: Optional[float] = None
    shape: str = "plateau"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ParameterError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.half_width is not None and not self.half_width > 0:
            raise ParameterError(f"half_width must be > 0, got {self.half_width!r}")
        if self.amplitude is not None and not self.amplitude > 0:
            raise ParameterError(f"amplitude must be > 0, got {self.amplitude!r}")

    def resolved(self, grid: Grid, s0: float) -> "Bump":
        return Bump(
            center=self.center,
            half_width=self.half_width if self.half_width is not None
            else DEFAULT_HALF_WIDTH_CELLS * grid.dx,
            amplitude=self.amplitude if self.amplitude is not None
            else DEFAULT_AMPLITUDE_FRACTION * s0,
            shape=self.shape,
        )

    def support_radius(self) -> float:
        return abs(self.center) + self.half_width

    def profile(self, x: np.ndarray) -> np.ndarray:
        r = np.abs(x - self.center)
        if self.shape == "plateau":
            # flat top on 3/4 of the half-width, linear ramps to zero
            ramp = 0.25 * self.half_width
            return self.amplitude * np.clip((self.half_width - r) / ramp, 0.0, 1.0)
        inside = r < self.half_width
        return np.where(inside, 0.5 * self.amplitude * (1.0 + np.cos(np.pi * r / self.half_width)), 0.0)


@dataclass(frozen=True)
class InitialData:
    """Per-strain bumps; a single bump is shared by every strain."""

    bumps: tuple = (Bump(),)

    def resolved(self, grid: Grid, model: ModelSpec) -> List[Bump]:
        bumps = list(self.bumps)
        if len(bumps) == 1:
            bumps = bumps * model.n
        if len(bumps) != model.n:
            raise ParameterError(f"expected 1 or {model.n} bumps, got {len(bumps)}")
        out = [b.resolved(grid, model.s0) for b in bumps]
        for k, b in enumerate(out, start=1):
            if b.support_radius() >= grid.half_length / 4:
                raise ParameterError(
                    f"bump {k} support radius {b.support_radius()!r} must be < L/4 = {grid.half_length / 4!r}"
                )
        return out

    def support_radius(self, grid: Grid, model: ModelSpec) -> float:
        return max(b.support_radius() for b in self.resolved(grid, model))


@dataclass(frozen=True)
class SimConfig:
    """Space-time discretisation.

    ``dt`` is derived from the CFL safety factor and the reaction bound
    unless given explicitly; it is then shrunk so that ``snapshot_dt`` is an
    integer number of steps.
    """

    grid: Grid
    t_end: float
    snapshot_dt: float
    cfl: float = 0.8
    scheme: str = "explicit-euler"
    dt: Optional[float] = None
    guard_cells: int = GUARD_CELLS
    guard_fraction: float = GUARD_FRACTION

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0 < self.cfl <= 1:
            raise ParameterError(f"cfl must lie in (0, 1], got {self.cfl!r}")
        if not self.t_end > 0 or not self.snapshot_dt > 0:
            raise ParameterError("t_end and snapshot_dt must be > 0")
        n = self.t_end / self.snapshot_dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ParameterError("t_end must be an integer multiple of snapshot_dt")

    def max_dt(self, model: ModelSpec) -> float:
        dmax = max(p.d for p in model.strains)
        rate = max(max(p.alpha * model.s0, p.mu) for p in model.strains)
        return min(self.cfl * self.grid.dx ** 2 / (2.0 * dmax), REACTION_LIMIT / rate)

    def stepping(self, model: ModelSpec):
        """Return ``(dt, steps_per_snapshot, n_snapshots)``."""
        limit = self.max_dt(model)
        if self.dt is None:
            per = max(1, math.ceil(self.snapshot_dt / limit * (1 - 1e-12)))
        else:
            if self.dt > limit * (1 + 1e-12):
                raise ParameterError(f"dt={self.dt!r} violates the stability bound {limit!r}")
            per = self.snapshot_dt / self.dt
            if abs(per - round(per)) > 1e-9 * per:
                raise ParameterError("snapshot_dt must be an integer multiple of dt")
            per = int(round(per))
        return self.snapshot_dt / per, per, int(round(self.t_end / self.snapshot_dt))


@dataclass
class SimState:
    t: float
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    step: int = 0
    clamp_count: int = 0

    def copy(self) -> "SimState":
        return SimState(self.t, self.S.copy(), self.I.copy(), self.R.copy(), self.step, self.clamp_count)


@dataclass(frozen=True)
class Diagnostics:
    identity_residual: float
    total_mass: float
    s_min: float
    s_max: float
    i_min: float
    i_max: tuple
    r_min: float
    r_max: tuple
    clamp_count: int


@dataclass
class Snapshot:
    state: SimState
    diagnostics: Diagnostics

    @property
    def t(self) -> float:
        return self.state.t


@dataclass
class Trajectory:
    """Snapshots of one run, plus what is needed to interpret them."""

    model: ModelSpec
    grid: Grid
    config: SimConfig
    bumps: List[Bump]
    snapshots: List[Snapshot] = field(default_factory=list)
    dt: float = float("nan")
    aborted: Optional[str] = None

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def recovered(self, k: int) -> np.ndarray:
        """``R_k`` at every snapshot, shape ``(n_snapshots, n_cells)``."""
        return np.array([s.state.R[k - 1] for s in self.snapshots])

    def infected(self, k: int) -> np.ndarray:
        return np.array([s.state.I[k - 1] for s in self.snapshots])

    def susceptible(self) -> np.ndarray:
        return np.array([s.state.S for s in self.snapshots])

    @property
    def final(self) -> SimState:
        return self.snapshots[-1].state


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

class _Coefficients:
    def __init__(self, model: ModelSpec):
        self.d = np.array([p.d for p in model.strains])[:, None]
        self.alpha = np.array([p.alpha for p in model.strains])[:, None]
        self.mu = np.array([p.mu for p in model.strains])[:, None]
        self.ratio = self.alpha / self.mu
        self.s0 = model.s0


def laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    """Centred second difference along the last axis with reflecting ends."""
    out = np.empty_like(u)
    out[..., 1:-1] = (u[..., 2:] + u[..., :-2]) - 2.0 * u[..., 1:-1]
    out[..., 0] = u[..., 1] - u[..., 0]
    out[..., -1] = u[..., -2] - u[..., -1]
    out /= dx * dx
    return out


def _euler_step(state: SimState, c: _Coefficients, dt: float, dx: float) -> None:
    S, I, R = state.S, state.I, state.R
    lap = laplacian(I, dx)
    force = (c.alpha * I).sum(axis=0)
    dI = c.d * lap + (c.alpha * S - c.mu) * I
    dR = c.mu * I
    S -= dt * (S * force)
    I += dt * dI
    R += dt * dR


def _kinetics_half(state: SimState, c: _Coefficients, h: float) -> None:
    S, I, R = state.S, state.I, state.R
    g = c.alpha * S - c.mu
    gh = g * h
    # integral of exp(g s) over [0, h]; equals h where g == 0
    safe_g = np.where(g == 0.0, 1.0, g)
    integral = np.where(g == 0.0, h, np.expm1(gh) / safe_g)
    dR = c.mu * I * integral
    I *= np.exp(gh)
    R += dR
    S *= np.exp(-(c.ratio * dR).sum(axis=0))


def _strang_step(state: SimState, c: _Coefficients, dt: float, dx: float) -> None:
    _kinetics_half(state, c, 0.5 * dt)
    state.I += dt * (c.d * laplacian(state.I, dx))
    _kinetics_half(state, c, 0.5 * dt)


_KERNELS = {"explicit-euler": _euler_step, "strang-split": _strang_step}


def _clamp(state: SimState) -> None:
    I = state.I
    if I.min() < 0.0:
        worst = float(I.min())
        if worst < -CLAMP_TOL:
            raise IntegrityError(f"negative infectious density {worst!r} at step {state.step}")
        neg = I < 0.0
        state.clamp_count += int(neg.sum())
        I[neg] = 0.0
    if state.S.min() < -CLAMP_TOL:
        raise IntegrityError(f"negative susceptible density at step {state.step}")


def step(state: SimState, config: SimConfig, model: ModelSpec, dt: Optional[float] = None,
         coefficients: Optional[_Coefficients] = None) -> SimState:
    """Advance ``state`` in place by one time step and return it."""
    c = coefficients or _Coefficients(model)
    if dt is None:
        dt = config.stepping(model)[0]
    _KERNELS[config.scheme](state, c, dt, config.grid.dx)
    state.step += 1
    state.t = state.step * dt
    if not math.isfinite(float(state.S.sum()) + float(state.I.sum())):
        raise DivergenceError(f"non-finite value at step {state.step}", step=state.step)
    _clamp(state)
    return state


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def initial_state(grid: Grid, model: ModelSpec, init: InitialData) -> SimState:
    x = grid.x
    bumps = init.resolved(grid, model)
    I = np.array([b.profile(x) for b in bumps])
    for k, row in enumerate(I, start=1):
        if not row.any():
            raise ParameterError(f"bump {k} is not resolved by the grid (identically zero)")
    S = np.full(grid.n_cells, model.s0)
    return SimState(t=0.0, S=S, I=I, R=np.zeros_like(I))


def identity_residual(state: SimState, model: ModelSpec) -> float:
    """``max |S - S0 prod exp(-alpha_k R_k / mu_k)|`` over the grid."""
    c = _Coefficients(model)
    predicted = model.s0 * np.exp(-(c.ratio * state.R).sum(axis=0))
    return float(np.max(np.abs(state.S - predicted)))


def total_mass(state: SimState, dx: float) -> float:
    return float(dx * (state.S.sum() + state.I.sum() + state.R.sum()))


def diagnostics(state: SimState, model: ModelSpec, dx: float) -> Diagnostics:
    return Diagnostics(
        identity_residual=identity_residual(state, model),
        total_mass=total_mass(state, dx),
        s_min=float(state.S.min()),
        s_max=float(state.S.max()),
        i_min=float(state.I.min()),
        i_max=tuple(float(v) for v in state.I.max(axis=1)),
        r_min=float(state.R.min()),
        r_max=tuple(float(v) for v in state.R.max(axis=1)),
        clamp_count=state.clamp_count,
    )


def _check_snapshot(state: SimState, previous: Optional[SimState], model: ModelSpec) -> None:
    tol = CLAMP_TOL * max(1.0, model.s0)
    if state.S.max() > model.s0 + tol:
        raise IntegrityError(f"S exceeds s0 at t={state.t!r}")
    if state.R.min() < -tol:
        raise IntegrityError(f"negative recovered density at t={state.t!r}")
    if previous is not None and np.any(state.R < previous.R - tol):
        raise IntegrityError(f"recovered density decreased between t={previous.t!r} and t={state.t!r}")


def _guard(state: SimState, m: int, fraction: float) -> Optional[int]:
    """Strain number whose recovered front reached the boundary band, if any."""
    R = state.R
    peak = R.max(axis=1)
    edge = np.maximum(R[:, :m].max(axis=1), R[:, -m:].max(axis=1))
    hit = (peak > 1e-12) & (edge >= fraction * peak)
    if hit.any():
        return int(np.argmax(hit)) + 1
    return None


def run(config: SimConfig, model: ModelSpec, init: InitialData = InitialData()) -> Iterator[Snapshot]:
    """Yield snapshots at ``t = 0, snapshot_dt, ..., t_end``.

    Raises:
        DomainTooSmallError: a recovered front entered the last
            ``guard_cells`` cells of either end.
        DivergenceError, IntegrityError: from :func:`step`.
    """
    dt, per, n_snap = config.stepping(model)
    dx = config.grid.dx
    c = _Coefficients(model)
    kernel = _KERNELS[config.scheme]
    state = initial_state(config.grid, model, init)
    prev = state.copy()
    yield Snapshot(prev, diagnostics(prev, model, dx))
    m = config.guard_cells
    for _ in range(n_snap):
        for _ in range(per):
            kernel(state, c, dt, dx)
            state.step += 1
            if not math.isfinite(float(state.S.sum()) + float(state.I.sum())):
                raise DivergenceError(f"non-finite value at step {state.step}", step=state.step)
            _clamp(state)
            hit = _guard(state, m, config.guard_fraction)
            if hit is not None:
                t = state.step * dt
                raise DomainTooSmallError(
                    f"front of strain {hit} within {m} cells of the boundary at t={t:.6g}",
                    strain=hit,
                    t=t,
                )
        state.t = state.step * dt
        _check_snapshot(state, prev, model)
        snap = state.copy()
        yield Snapshot(snap, diagnostics(snap, model, dx))
        prev = snap


def simulate(config: SimConfig, model: ModelSpec, init: InitialData = InitialData(),
             keep_partial: bool = False) -> Trajectory:
    """Collect :func:`run` into a :class:`Trajectory`.

    With ``keep_partial`` a boundary abort is recorded in
    :attr:`Trajectory.aborted` instead of propagating.
    """
    traj = Trajectory(model=model, grid=config.grid, config=config,
                      bumps=init.resolved(config.grid, model), dt=config.stepping(model)[0])
    try:
        for snap in run(config, model, init):
            traj.snapshots.append(snap)
    except DomainTooSmallError as exc:
        if not keep_partial:
            raise
        traj.aborted = str(exc)
    return traj


@dataclass
class OdeTrajectory:
    t: np.ndarray
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray


def run_ode_reference(alpha: float, mu: float, s0: float, i0: float, t_end: float, dt: float) -> OdeTrajectory:
    """Classical RK4 integration of the spatially homogeneous SIR system."""
    for name, v in (("alpha", alpha), ("mu", mu), ("s0", s0), ("t_end", t_end), ("dt", dt)):
        if not (math.isfinite(v) and v > 0):
            raise ParameterError(f"{name} must be finite and > 0, got {v!r}")
    if not (math.isfinite(i0) and i0 >= 0):
        raise ParameterError(f"i0 must be finite and >= 0, got {i0!r}")

    def rhs(s, i):
        inf = alpha * s * i
        rec = mu * i
        return -inf, inf - rec, rec

    n = int(math.ceil(t_end / dt - 1e-12))
    h = t_end / n
    S = np.empty(n + 1)
    I = np.empty(n + 1)
    R = np.empty(n + 1)
    s, i, r = float(s0), float(i0), 0.0
    S[0], I[0], R[0] = s, i, r
    for j in range(1, n + 1):
        k1 = rhs(s, i)
        k2 = rhs(s + 0.5 * h * k1[0], i + 0.5 * h * k1[1])
        k3 = rhs(s + 0.5 * h * k2[0], i + 0.5 * h * k2[1])
        k4 = rhs(s + h * k3[0], i + h * k3[1])
        s += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        i += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        r += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not (math.isfinite(s) and math.isfinite(i)):
            raise NumericalError(f"ODE integration diverged at t={j * h!r}")
        S[j], I[j], R[j] = s, i, r
    return OdeTrajectory(t=np.linspace(0.0, n * h, n + 1), S=S, I=I, R=R)

"""Per-strain closed-form quantities of the multi-strain diffusive SIR model.

Every strain ``k`` carries a triple ``(d, alpha, mu)``. Given a uniform
susceptible density ``sigma`` the strain, if it were alone, would

* invade space at speed ``2 sqrt(d (alpha sigma - mu))`` (0 when the
  bracket is negative),
* leave behind a recovered plateau ``rho`` solving
  ``sigma mu (1 - exp(-alpha rho / mu)) - mu rho = 0``,
* lower the susceptible density to ``sigma exp(-alpha rho / mu)``.

The scalar root finder used here (bisection safeguarded Newton) is also
reused by the experiment builders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from multisir.errors import NumericalError, ParameterError

XTOL = 1e-13
RTOL = 1e-13
MAXITER = 200
RHO_FLOOR = 1e-12


@dataclass(frozen=True)
class StrainParams:
    """Coefficients of one strain: diffusivity, transmission and recovery."""

    d: float
    alpha: float
    mu: float

    def __post_init__(self):
        for name in ("d", "alpha", "mu"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, float(value))

    @property
    def threshold(self) -> float:
        """Susceptible level ``mu / alpha`` above which the strain can spread."""
        return self.mu / self.alpha

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "mu": self.mu}


def check_sigma(sigma, name="sigma") -> float:
    if isinstance(sigma, bool) or not isinstance(sigma, (int, float)):
        raise ParameterError(f"{name} must be a real number, got {sigma!r}")
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma < 0:
        raise ParameterError(f"{name} must be finite and >= 0, got {sigma!r}")
    return sigma


def _check_finite(value, name) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# scalar root finding
# ---------------------------------------------------------------------------

def find_root(
    func: Callable[[float], Tuple[float, float]],
    lo: float,
    hi: float,
    xtol: float = XTOL,
    rtol: float = RTOL,
    maxiter: int = MAXITER,
) -> float:
    """Locate a sign change of ``func`` inside ``[lo, hi]``.

    ``func(x)`` returns ``(value, derivative)``. Newton steps are taken
    whenever they land strictly inside the current bracket and shrink it
    fast enough; otherwise the bracket is bisected.

    Raises:
        NumericalError: if the endpoints do not bracket a root or the
            iteration cap is reached. The error carries the last bracket.
    """
    flo, _ = func(lo)
    fhi, _ = func(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NumericalError(
            f"no sign change on [{lo!r}, {hi!r}]: f(lo)={flo!r}, f(hi)={fhi!r}",
            state={"lo": lo, "hi": hi, "f_lo": flo, "f_hi": fhi},
        )
    # orient so that f(neg) < 0 < f(pos)
    neg, pos = (lo, hi) if flo < 0 else (hi, lo)
    x = 0.5 * (lo + hi)
    width_prev = abs(hi - lo)
    for _ in range(maxiter):
        fx, dfx = func(x)
        if fx == 0.0:
            return x
        if fx < 0:
            neg = x
        else:
            pos = x
        a, b = min(neg, pos), max(neg, pos)
        tol = xtol + rtol * abs(x)
        if b - a <= tol:
            return x
        step_ok = False
        if dfx != 0.0 and math.isfinite(dfx):
            x_new = x - fx / dfx
            if a < x_new < b and abs(x_new - x) < 0.5 * width_prev:
                step_ok = True
                width_prev = abs(x_new - x)
                if abs(x_new - x) <= tol:
                    return x_new
                x = x_new
        if not step_ok:
            width_prev = b - a
            x = 0.5 * (a + b)
    raise NumericalError(
        f"root finder did not converge in {maxiter} iterations",
        state={"lo": min(neg, pos), "hi": max(neg, pos), "x": x},
    )


# ---------------------------------------------------------------------------
# per-strain functions
# ---------------------------------------------------------------------------

def speed(params: StrainParams, sigma: float) -> float:
    """Spreading speed of a lone strain on a susceptible density ``sigma``."""
    sigma = check_sigma(sigma)
    growth = params.alpha * sigma - params.mu
    if growth <= 0:
        return 0.0
    return 2.0 * math.sqrt(params.d * growth)


def reaction(params: StrainParams, rho: float, sigma: float) -> float:
    """KPP nonlinearity ``sigma mu (1 - exp(-alpha rho / mu)) - mu rho``."""
    sigma = check_sigma(sigma)
    rho = _check_finite(rho, "rho")
    ratio = params.alpha / params.mu
    return -sigma * params.mu * math.expm1(-ratio * rho) - params.mu * rho


def reaction_derivative(params: StrainParams, rho: float, sigma: float) -> float:
    """Partial derivative of :func:`reaction` with respect to ``rho``."""
    sigma = check_sigma(sigma)
    rho = _check_finite(rho, "rho")
    return sigma * params.alpha * math.exp(-params.alpha / params.mu * rho) - params.mu


def is_supercritical(params: StrainParams, sigma: float) -> bool:
    """True when ``alpha sigma / mu > 1`` (equality counts as subcritical)."""
    return params.alpha * check_sigma(sigma) > params.mu


def asymptotic_value(params: StrainParams, sigma: float) -> Optional[float]:
    """Positive zero of ``reaction(params, ., sigma)`` or ``None``.

    The zero exists iff ``alpha sigma / mu > 1``. It is bracketed between a
    tiny positive floor (where the reaction is positive) and an upper end
    doubled from ``sigma`` until the reaction turns negative.
    """
    sigma = check_sigma(sigma)
    if not is_supercritical(params, sigma):
        return None

    def fun(rho):
        return reaction(params, rho, sigma), reaction_derivative(params, rho, sigma)

    lo = RHO_FLOOR
    while fun(lo)[0] <= 0:
        # only reachable extremely close to the threshold
        lo *= 0.5
        if lo < 1e-300:
            raise NumericalError(
                "cannot bracket the plateau value from below",
                state={"sigma": sigma, "params": params.to_dict()},
            )
    hi = max(sigma, 2 * lo)
    for _ in range(MAXITER):
        if fun(hi)[0] < 0:
            break
        hi *= 2.0
    else:
        raise NumericalError(
            "cannot bracket the plateau value from above",
            state={"sigma": sigma, "hi": hi},
        )
    # f(sigma, sigma) < 0, so the root lies below sigma; the clip only
    # removes an ulp of overshoot when exp(-alpha sigma / mu) is negligible
    return min(find_root(fun, lo, hi), sigma)


def depleted_level(params: StrainParams, sigma_before: float, rho: float) -> float:
    """Susceptible level ``sigma exp(-alpha rho / mu)`` left after a plateau ``rho``."""
    sigma_before = check_sigma(sigma_before, "sigma_before")
    rho = _check_finite(rho, "rho")
    if rho < 0:
        raise ParameterError(f"rho must be >= 0, got {rho!r}")
    return sigma_before * math.exp(-params.alpha / params.mu * rho)


def basic_reproduction_number(params: StrainParams, s0: float) -> float:
    return params.alpha * check_sigma(s0, "s0") / params.mu


def _final_size_root(level: float, ratio: float, upper: float) -> float:
    """Root ``z < upper`` of ``z - ratio ln z = level`` solved in ``u = ln z``.

    ``upper`` must be the minimiser ``ratio`` or any point where the left
    side is below ``level``.
    """

    def fun(u):
        z = math.exp(u)
        return z - ratio * u - level, z - ratio

    u_hi = math.log(upper)
    u_lo = u_hi - 1.0
    while fun(u_lo)[0] <= 0:
        u_lo = u_hi - 2.0 * (u_hi - u_lo)
        if u_lo < -745.0:
            raise NumericalError("final susceptible level underflows", state={"u_lo": u_lo})
    return math.exp(find_root(fun, u_lo, u_hi))


def final_size_function(z: float, ratio: float) -> float:
    """``z - ratio ln z``; conserved along the single-strain ODE flow."""
    return z - ratio * math.log(z)


def final_susceptible_single(params: StrainParams, s0: float) -> float:
    """Susceptible level left by a single strain started on ``s0``.

    Computed as the smaller root of ``z - (mu/alpha) ln z = s0 - (mu/alpha) ln s0``,
    independently of :func:`asymptotic_value`.
    """
    s0 = check_sigma(s0, "s0")
    if s0 <= 0:
        raise ParameterError("s0 must be > 0")
    if not is_supercritical(params, s0):
        return s0
    ratio = params.threshold
    return _final_size_root(final_size_function(s0, ratio), ratio, ratio)


def largest_final_size_root(level: float, ratio: float) -> float:
    """Largest root of ``z - ratio ln z = level`` (requires ``level > g(ratio)``)."""
    gmin = final_size_function(ratio, ratio)
    if level <= gmin:
        raise ParameterError(f"level {level!r} not above the minimum {gmin!r}")

    def fun(z):
        return z - ratio * math.log(z) - level, 1.0 - ratio / z

    hi = 2.0 * ratio
    while fun(hi)[0] <= 0:
        hi *= 2.0
    return find_root(fun, ratio, hi)

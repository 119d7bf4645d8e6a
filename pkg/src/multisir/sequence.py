"""Propagation sequences: which strains invade, in which order, how fast.

Starting from ``S_0``, the strain with the largest positive speed on the
current susceptible level is selected, its plateau and the depleted level
it leaves behind are recorded, and the recursion continues on the depleted
level with the remaining strains. The two sufficient conditions under which
this prediction is a theorem (speed separation of trailing strains and
subcriticality of the leftovers) are evaluated alongside.

Strain numbers are 1-based everywhere in this module's outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from multisir.errors import ContractError, ParameterError
from multisir.kinetics import (
    StrainParams,
    asymptotic_value,
    check_sigma,
    depleted_level,
    speed,
)

DEFAULT_TIE_TOL = 1e-9


@dataclass(frozen=True)
class ModelSpec:
    """Ordered list of strains and the uniform initial susceptible density."""

    strains: tuple
    s0: float

    def __post_init__(self):
        strains = tuple(self.strains)
        if len(strains) < 1:
            raise ParameterError("a model needs at least one strain")
        for k, p in enumerate(strains, start=1):
            if not isinstance(p, StrainParams):
                raise ParameterError(f"strain {k} is not a StrainParams instance")
        s0 = check_sigma(self.s0, "s0")
        if s0 <= 0:
            raise ParameterError(f"s0 must be > 0, got {s0!r}")
        object.__setattr__(self, "strains", strains)
        object.__setattr__(self, "s0", s0)

    @property
    def n(self) -> int:
        return len(self.strains)

    def strain(self, k: int) -> StrainParams:
        """Parameters of strain ``k`` (1-based)."""
        return self.strains[k - 1]

    def to_dict(self) -> dict:
        return {"s0": self.s0, "strains": [p.to_dict() for p in self.strains]}


@dataclass(frozen=True)
class SeparationCheck:
    """One instance of ``c_k(S_{i-1}) + c_k(S_i) < c_i``."""

    step: int
    strain: int
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def relative_margin(self) -> float:
        return self.margin / self.rhs if self.rhs > 0 else float("-inf")

    @property
    def ok(self) -> bool:
        return self.lhs < self.rhs


@dataclass(frozen=True)
class SubcriticalCheck:
    """One instance of ``alpha_k S_p - mu_k < 0``."""

    strain: int
    growth: float
    mu: float

    @property
    def margin(self) -> float:
        return -self.growth

    @property
    def relative_margin(self) -> float:
        return -self.growth / self.mu

    @property
    def ok(self) -> bool:
        return self.growth < 0


@dataclass(frozen=True)
class TieFlag:
    step: int
    strains: tuple
    tolerance: float


@dataclass
class PropagationOutcome:
    """Result of the propagation-sequence recursion and hypothesis checks."""

    indices: List[int]
    speeds: List[float]
    values: List[float]
    levels: List[float]
    extinct: List[int]
    hyp_separation: List[SeparationCheck] = field(default_factory=list)
    hyp_subcritical: List[SubcriticalCheck] = field(default_factory=list)
    ties: List[TieFlag] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.indices)

    @property
    def s_infinity(self) -> float:
        return self.levels[-1]

    @property
    def separation_ok(self) -> bool:
        return all(c.ok for c in self.hyp_separation)

    @property
    def subcritical_ok(self) -> bool:
        return all(c.ok for c in self.hyp_subcritical)

    @property
    def theorem_applicable(self) -> bool:
        return not self.ties and self.separation_ok and self.subcritical_ok

    def worst_relative_margin(self) -> float:
        """Smallest relative margin over every hypothesis instance (inf if none)."""
        margins = [c.relative_margin for c in self.hyp_separation]
        margins += [c.relative_margin for c in self.hyp_subcritical]
        return min(margins, default=float("inf"))

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "speeds": list(self.speeds),
            "values": list(self.values),
            "levels": list(self.levels),
            "s_infinity": self.s_infinity,
            "extinct": list(self.extinct),
            "verdicts": {
                "separation": [
                    {"step": c.step, "strain": c.strain, "lhs": c.lhs, "rhs": c.rhs,
                     "margin": c.margin, "ok": c.ok}
                    for c in self.hyp_separation
                ],
                "subcritical": [
                    {"strain": c.strain, "growth": c.growth, "margin": c.margin, "ok": c.ok}
                    for c in self.hyp_subcritical
                ],
                "separation_ok": self.separation_ok,
                "subcritical_ok": self.subcritical_ok,
                "theorem_applicable": self.theorem_applicable,
            },
            "ties": [
                {"step": t.step, "strains": list(t.strains), "tolerance": t.tolerance}
                for t in self.ties
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _select(model: ModelSpec, remaining: Sequence[int], sigma: float, tie_tol: float):
    """Return (winner, speed, tied strains) among ``remaining`` at level ``sigma``."""
    speeds = {k: speed(model.strain(k), sigma) for k in remaining}
    candidates = [k for k in remaining if speeds[k] > 0]
    if not candidates:
        return None, 0.0, ()
    best = max(candidates, key=lambda k: (speeds[k], -k))
    cmax = speeds[best]
    tied = tuple(k for k in candidates if speeds[k] >= cmax * (1.0 - tie_tol))
    return best, cmax, tied if len(tied) > 1 else ()


def check_speed_separation(
    model: ModelSpec, indices: Sequence[int], speeds: Sequence[float], levels: Sequence[float]
) -> List[SeparationCheck]:
    """Evaluate the speed-separation inequality for steps ``1..p-1``.

    For each step ``i`` and each strain ``k`` not among the first ``i``
    selected, compare ``c_k(S_{i-1}) + c_k(S_i)`` with ``c_i``.
    """
    checks = []
    p = len(indices)
    for i in range(1, p):
        chosen = set(indices[:i])
        for k in range(1, model.n + 1):
            if k in chosen:
                continue
            params = model.strain(k)
            lhs = speed(params, levels[i - 1]) + speed(params, levels[i])
            checks.append(SeparationCheck(step=i, strain=k, lhs=lhs, rhs=speeds[i - 1]))
    return checks


def check_subcriticality(s_p: float, model: ModelSpec, extinct: Sequence[int]) -> List[SubcriticalCheck]:
    """Strict sign check of ``alpha_k S_p - mu_k`` for every non-selected strain."""
    out = []
    for k in extinct:
        params = model.strain(k)
        out.append(SubcriticalCheck(strain=k, growth=params.alpha * s_p - params.mu, mu=params.mu))
    return out


def compute_sequence(model: ModelSpec, tie_tol: float = DEFAULT_TIE_TOL) -> PropagationOutcome:
    """Run the propagation-sequence recursion on ``model``.

    Ties (two positive speeds within ``tie_tol`` relatively) do not stop the
    recursion: the lowest-numbered maximiser is taken and the tie recorded,
    which voids ``theorem_applicable``.
    """
    if not 0.0 <= tie_tol <= 1e-2:
        raise ParameterError(f"tie_tol must lie in [0, 1e-2], got {tie_tol!r}")
    remaining = list(range(1, model.n + 1))
    indices, speeds, values, levels, ties = [], [], [], [model.s0], []
    while remaining:
        sigma = levels[-1]
        best, cmax, tied = _select(model, remaining, sigma, tie_tol)
        if best is None:
            break
        if tied:
            ties.append(TieFlag(step=len(indices) + 1, strains=tied, tolerance=tie_tol))
        params = model.strain(best)
        rho = asymptotic_value(params, sigma)
        indices.append(best)
        speeds.append(cmax)
        values.append(rho)
        levels.append(depleted_level(params, sigma, rho))
        remaining.remove(best)
    return PropagationOutcome(
        indices=indices,
        speeds=speeds,
        values=values,
        levels=levels,
        extinct=list(remaining),
        hyp_separation=check_speed_separation(model, indices, speeds, levels),
        hyp_subcritical=check_subcriticality(levels[-1], model, remaining),
        ties=ties,
    )


@dataclass(frozen=True)
class CascadeChains:
    alphas: tuple
    mus: tuple

    @property
    def decreasing(self) -> bool:
        a_ok = all(b < a for a, b in zip(self.alphas, self.alphas[1:]))
        m_ok = all(b < a for a, b in zip(self.mus, self.mus[1:]))
        return a_ok and m_ok


def cascade_monotonicity(outcome: PropagationOutcome, model: ModelSpec) -> CascadeChains:
    """Transmission and recovery rates along the selected strains.

    With equal diffusivities and the theorem applicable, both chains must
    strictly decrease; :attr:`CascadeChains.decreasing` reports it.

    Raises:
        ContractError: diffusivities differ, or the theorem does not apply.
    """
    ds = {p.d for p in model.strains}
    if len(ds) != 1:
        raise ContractError("cascade monotonicity requires equal diffusivities")
    if not outcome.theorem_applicable:
        raise ContractError("cascade monotonicity requires the theorem hypotheses to hold")
    chain = [model.strain(k) for k in outcome.indices]
    return CascadeChains(alphas=tuple(p.alpha for p in chain), mus=tuple(p.mu for p in chain))

import math

import numpy as np
import pytest

import oracles
from multisir.errors import ContractError, ParameterError
from multisir.experiments import (
    REGIMES,
    ScenarioConfig,
    build_r0_counterexample,
    closed_form_regime,
    cascade_harness,
    regime_constants,
    representatives,
    sweep_regimes,
    verify_prediction,
)
from multisir.kinetics import StrainParams
from multisir.sequence import ModelSpec, check_subcriticality
from multisir.sim import Grid, SimConfig

P1 = StrainParams(1.0, 2.0, 1.0)
P2 = StrainParams(10.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# larger R0 that does not spread
# ---------------------------------------------------------------------------

def test_construction_reference_case():
    c = build_r0_counterexample(1.0, 1.0, 2.0)
    s1 = oracles.final_susceptible(1, 1, 2)
    assert c.s1 == pytest.approx(s1, rel=1e-10)
    assert c.lam_interval == pytest.approx((1.0, 1 / s1))
    assert c.lam == pytest.approx(0.5 * (1 + 1 / s1))
    assert c.lam == pytest.approx(1.7304, abs=1e-4)
    r0_1, r0_2 = c.r0
    assert r0_2 == pytest.approx(c.lam * 2.0) and r0_2 > r0_1 == 2.0
    assert c.outcome.indices == [1] and c.outcome.theorem_applicable
    sub = check_subcriticality(c.outcome.s_infinity, c.model, [2])[0]
    assert sub.growth == pytest.approx(c.eps * (c.lam * c.s1 - 1.0)) and sub.ok
    assert c.trace[-1]["accepted"] and all(not t["accepted"] for t in c.trace[:-1])


def test_construction_precondition():
    with pytest.raises(ContractError):
        build_r0_counterexample(1.0, 1.0, 1.0)
    with pytest.raises(ContractError):
        build_r0_counterexample(1.0, 2.0, 1.5)


@pytest.mark.parametrize("alpha1,mu1,s0", [(1, 1, 2), (4, 4, 2), (3, 1, 0.5), (0.5, 2, 10), (2, 1, 1.01)])
def test_construction_properties(alpha1, mu1, s0):
    c = build_r0_counterexample(alpha1, mu1, s0)
    r1, r2 = c.r0
    assert r2 > r1 > 1
    assert c.outcome.p == 1 and c.outcome.indices == [1]
    assert c.outcome.separation_ok and c.outcome.subcritical_ok and not c.outcome.ties
    p2 = c.model.strain(2)
    assert c.eps * (c.lam * s0 - 1) < alpha1 * s0 - mu1
    assert p2.alpha == pytest.approx(c.eps * c.lam) and p2.mu == c.eps


# ---------------------------------------------------------------------------
# decreasing rate cascade
# ---------------------------------------------------------------------------

def test_cascade_harness_is_seeded_and_passes():
    a = cascade_harness(30, seed=5)
    b = cascade_harness(30, seed=5)
    assert a.passed and len(a.instances) == 30 and a.draws == b.draws
    assert all(out.p >= 2 and out.theorem_applicable for _, out, _ in a.instances)


# ---------------------------------------------------------------------------
# two-strain regime map
# ---------------------------------------------------------------------------

def test_regime_constants_reference():
    c = regime_constants(P1, P2)
    assert not c.relabelled and c.r_lower == 2.0
    assert c.s_lower == pytest.approx(1.125, rel=1e-15)
    assert c.s_upper == pytest.approx(oracles.largest_root(0.5 + math.log(2), 1.0), rel=1e-12)
    assert c.eps_applicable and c.eps == pytest.approx(3 * 10 * 1 * (2 - 1) / ((10 - 8) * (10 - 2)))
    assert c.boundaries() == pytest.approx([0.5, 1.125, c.s_upper])


def test_regime_constants_relabel_and_errors():
    c = regime_constants(P2, P1)
    assert c.relabelled and c.strain1 == P1
    with pytest.raises(ParameterError):
        regime_constants(StrainParams(1, 1, 1), StrainParams(2, 2, 2))


def test_slow_second_strain_behaves_like_strain_one_alone():
    # d2/d1 < alpha1/alpha2
    p1, p2 = StrainParams(1, 2, 1), StrainParams(1.5, 1, 1)
    c = regime_constants(p1, p2)
    assert c.s_lower is None
    res = sweep_regimes(p1, p2, np.linspace(0.55, 6, 40))
    assert {p.regime for p in res.points} == {"only-1"}
    assert not res.disagreements()
    for pt in res.points:
        assert pt.outcome.indices == [1]


def test_eps_formula_out_of_range_uses_scan():
    # d2 alpha2 between d1 alpha1 and 4 d1 alpha1
    p1, p2 = StrainParams(1, 2, 1), StrainParams(5, 1, 0.9)
    c = regime_constants(p1, p2)
    assert not c.eps_applicable and c.eps is None
    assert c.s_lower <= c.gap_upper <= c.s_upper
    res = sweep_regimes(p1, p2, points=120)
    assert not res.disagreements()


def test_sweep_labels_agree_and_partition():
    res = sweep_regimes(P1, P2, points=200)
    assert not res.disagreements()
    s0 = res.s0
    assert np.all(np.diff(s0) > 0)
    labels = [p.regime for p in res.points]
    assert set(labels) <= set(REGIMES)
    # labels form contiguous bands in the natural order
    order = [r for i, r in enumerate(labels) if i == 0 or labels[i - 1] != r]
    assert order == sorted(order, key=REGIMES.index) and len(order) == len(set(order))
    assert sum(not p.refined for p in res.points) == 200


def test_sweep_parallel_matches_serial():
    a = sweep_regimes(P1, P2, points=60)
    b = sweep_regimes(P1, P2, points=60, jobs=2)
    assert [(p.s0, p.regime, p.s_inf_analytic) for p in a.points] == \
           [(p.s0, p.regime, p.s_inf_analytic) for p in b.points]


def test_closed_form_limits_monotone():
    vals = []
    for ratio in (1e2, 1e3, 1e4):
        c = regime_constants(StrainParams(1, 2, 1), StrainParams(ratio, 1, 1))
        vals.append((c.s_lower, c.eps))
    s_l = [v[0] for v in vals]
    eps = [v[1] for v in vals]
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(s_l, s_l[1:]))
    assert all(b < a for a, b in zip(eps, eps[1:]))
    assert abs(s_l[-1] - 1) < 1e-3 and eps[-1] < 1e-3


def test_middle_regime_final_level():
    # strain 2 spreads first, strain 1 follows on the leftovers
    p1, p2 = StrainParams(1, 2, 1), StrainParams(100, 1, 1)
    c = regime_constants(p1, p2)
    assert c.gap_upper < 1.4 < c.s_upper
    res = sweep_regimes(p1, p2, [1.4], refine=False)
    pt = res.points[0]
    assert pt.regime == pt.regime_sequence == "2-then-1"
    assert pt.outcome.indices == [2, 1]
    s1 = 1.4 * math.exp(-oracles.plateau(1, 1, 1.4))
    expected = s1 * math.exp(-2.0 * oracles.plateau(2, 1, s1))
    assert pt.s_inf_analytic == pytest.approx(expected, rel=1e-10)


def test_representatives_skip_gap():
    res = sweep_regimes(P1, P2, points=200)
    idx = representatives(res, 5)
    assert all(res.points[i].regime != "gap" for i in idx)
    for regime in REGIMES:
        assert sum(res.points[i].regime == regime for i in idx) <= 5


# ---------------------------------------------------------------------------
# end-to-end verification
# ---------------------------------------------------------------------------

def test_verify_refuses_tie():
    s = StrainParams(1, 1, 1)
    sc = ScenarioConfig(ModelSpec((s, s), 2.0), SimConfig(Grid(100, 400), 10.0, 1.0))
    rep = verify_prediction(sc)
    assert rep.status == "inapplicable" and "tie" in rep.reason and rep.report is None


def test_verify_reports_mismatch_without_raising():
    # too short a run to fit a speed after burn-in is a numerical failure;
    # a wrong tolerance is a mismatch
    from multisir.experiments import single_strain_scenario
    from multisir.metrics import MeasureSettings

    sc = single_strain_scenario(half_length=150.0, t_end=50.0)
    sc = ScenarioConfig(sc.model, sc.sim, sc.init, MeasureSettings(burn_in=10.0, speed_tol_low=0.0,
                                                                    speed_tol_high=0.0))
    rep = verify_prediction(sc)
    assert rep.status == "mismatch"
    assert any(c.name == "speed[1]" and not c.passed for c in rep.checks)

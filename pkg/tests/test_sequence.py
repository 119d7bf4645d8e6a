import json

import pytest
from hypothesis import given, strategies as st

import oracles
from multisir.errors import ContractError, ParameterError
from multisir.kinetics import StrainParams
from multisir.sequence import (
    ModelSpec,
    cascade_monotonicity,
    check_subcriticality,
    compute_sequence,
)

pos = st.floats(min_value=0.1, max_value=10.0)
strain = st.builds(StrainParams, pos, pos, pos)
models = st.builds(
    lambda s, s0: ModelSpec(tuple(s), s0),
    st.lists(strain, min_size=1, max_size=5),
    st.floats(min_value=0.1, max_value=5.0),
)


def test_model_spec_validation():
    with pytest.raises(ParameterError):
        ModelSpec((), 1.0)
    with pytest.raises(ParameterError):
        ModelSpec((StrainParams(1, 1, 1),), 0.0)
    with pytest.raises(ParameterError):
        ModelSpec(((1, 1, 1),), 1.0)
    m = ModelSpec([StrainParams(1, 1, 1)], 2)
    assert m.n == 1 and m.strain(1).alpha == 1.0 and isinstance(m.strains, tuple)


def test_single_supercritical():
    out = compute_sequence(ModelSpec((StrainParams(1, 1, 1),), 2.0))
    assert out.indices == [1] and out.p == 1
    assert out.speeds[0] == pytest.approx(2.0)
    assert out.values[0] == pytest.approx(oracles.plateau(1, 1, 2), rel=1e-12)
    assert out.s_infinity == pytest.approx(oracles.final_susceptible(1, 1, 2), rel=1e-10)
    assert out.extinct == [] and out.hyp_separation == [] and out.hyp_subcritical == []
    assert out.theorem_applicable


def test_single_subcritical():
    out = compute_sequence(ModelSpec((StrainParams(1, 1, 1),), 0.9))
    assert out.p == 0 and out.s_infinity == 0.9 and out.extinct == [1]
    assert out.hyp_subcritical[0].growth == pytest.approx(-0.1)
    assert out.subcritical_ok and out.theorem_applicable


def test_threshold_equality_is_not_subcritical():
    m = ModelSpec((StrainParams(1, 1, 1),), 1.0)
    out = compute_sequence(m)
    assert out.p == 0
    assert not out.subcritical_ok and not out.theorem_applicable
    assert not check_subcriticality(1.0, m, [1])[0].ok


def test_identical_strains_tie():
    s = StrainParams(1, 1, 1)
    out = compute_sequence(ModelSpec((s, s), 2.0))
    assert out.indices == [1]
    assert len(out.ties) == 1 and out.ties[0].strains == (1, 2) and out.ties[0].step == 1
    assert not out.theorem_applicable


def test_near_tie_respects_tolerance():
    a, b = StrainParams(1, 1, 1), StrainParams(1, 1 + 1e-6, 1)
    assert compute_sequence(ModelSpec((a, b), 2.0), tie_tol=1e-9).ties == []
    out = compute_sequence(ModelSpec((a, b), 2.0), tie_tol=1e-3)
    assert out.ties and out.indices == [2]
    with pytest.raises(ParameterError):
        compute_sequence(ModelSpec((a,), 2.0), tie_tol=0.1)


def test_two_strain_cascade_values():
    # fast strain 1 then slow strain 2 on the leftovers
    m = ModelSpec((StrainParams(12, 4, 3), StrainParams(1, 11 / 3, 1)), 1.0)
    out = compute_sequence(m)
    assert out.indices == [1, 2]
    assert out.speeds[0] == pytest.approx(oracles.speed(12, 4, 3, 1.0))
    rho1 = oracles.plateau(4, 3, 1.0)
    s1 = 1.0 * float(oracles.mp.exp(-4 / 3 * rho1))
    assert out.levels[1] == pytest.approx(s1, rel=1e-10)
    assert out.speeds[1] == pytest.approx(oracles.speed(1, 11 / 3, 1, s1), rel=1e-10)
    sep = out.hyp_separation
    assert len(sep) == 1 and sep[0].step == 1 and sep[0].strain == 2 and sep[0].ok
    assert sep[0].relative_margin > 0.1


def test_json_shape():
    out = compute_sequence(ModelSpec((StrainParams(1, 1, 1), StrainParams(1, 0.2, 1)), 2.0))
    doc = json.loads(out.to_json())
    for key in ("indices", "speeds", "values", "levels", "s_infinity", "verdicts", "ties", "extinct"):
        assert key in doc
    assert doc["verdicts"]["theorem_applicable"] is True
    assert doc["extinct"] == [2]


@given(models)
def test_outcome_invariants(model):
    out = compute_sequence(model)
    assert len(set(out.indices)) == out.p
    assert all(b < a for a, b in zip(out.speeds, out.speeds[1:]))
    assert all(c > 0 for c in out.speeds)
    assert all(b < a for a, b in zip(out.levels, out.levels[1:]))
    assert out.s_infinity == out.levels[-1]
    assert sorted(out.indices + out.extinct) == list(range(1, model.n + 1))
    if out.theorem_applicable:
        for k in out.extinct:
            p = model.strain(k)
            assert p.alpha * out.s_infinity - p.mu < 0
    # deterministic
    assert compute_sequence(model).to_json() == out.to_json()


@given(models, st.randoms(use_true_random=False))
def test_permutation_equivariance(model, rnd):
    perm = list(range(model.n))
    rnd.shuffle(perm)
    permuted = ModelSpec(tuple(model.strains[i] for i in perm), model.s0)
    a, b = compute_sequence(model), compute_sequence(permuted)
    if a.ties or b.ties:
        return
    assert [perm[k - 1] + 1 for k in b.indices] == a.indices
    assert b.speeds == a.speeds and b.values == a.values and b.levels == a.levels


@given(models, strain)
def test_subcritical_extra_strain_is_inert(model, extra):
    # rescale alpha so that alpha*s0 < mu
    extra = StrainParams(extra.d, 0.9 * extra.mu / model.s0, extra.mu)
    a = compute_sequence(model)
    b = compute_sequence(ModelSpec(model.strains + (extra,), model.s0))
    assert a.indices == b.indices and a.speeds == b.speeds and a.levels == b.levels
    assert model.n + 1 in b.extinct


def test_cascade_monotonicity_contracts():
    m = ModelSpec((StrainParams(1, 1, 1),), 2.0)
    chains = cascade_monotonicity(compute_sequence(m), m)
    assert chains.decreasing and chains.alphas == (1.0,)
    unequal = ModelSpec((StrainParams(1, 1, 1), StrainParams(2, 1, 1)), 2.0)
    with pytest.raises(ContractError):
        cascade_monotonicity(compute_sequence(unequal), unequal)
    s = StrainParams(1, 1, 1)
    tie = ModelSpec((s, s), 2.0)
    with pytest.raises(ContractError):
        cascade_monotonicity(compute_sequence(tie), tie)


def test_cascade_example_decreases():
    m = ModelSpec((StrainParams(1, 1, 0.2), StrainParams(1, 8, 4)), 1.0)
    out = compute_sequence(m)
    assert out.indices == [2, 1] and out.theorem_applicable
    assert cascade_monotonicity(out, m).decreasing

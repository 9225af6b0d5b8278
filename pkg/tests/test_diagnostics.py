import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import OracleProblem, oracle_theta
from wildsize.bootstrap import BaseKind, BootstrapSchemeSpec, Centering, MultiplierBase, ResidualSpace
from wildsize.diagnostics import (
    Branch,
    ThetaKind,
    Verdict,
    theta,
    theta_kind,
    theta_minus_alpha_verdict,
)
from wildsize.errors import AssumptionViolation
from wildsize.linalg import TestingProblem, Tolerances
from wildsize.statistics import ALL_STATISTICS, HcKind, StatisticSpec


def scheme(base="rademacher", A="SpanX", centering="restricted", w=HcKind.HC0, wr=False):
    return BootstrapSchemeSpec(MultiplierBase(BaseKind(base)), w, wr, ResidualSpace(A), Centering(centering))


def design(seed, n=6, k=2):
    rng = np.random.default_rng(seed)
    return np.column_stack([np.ones(n), np.exp(rng.standard_normal((n, k - 1)))])


def test_kind_dispatch():
    assert theta_kind(StatisticSpec(HcKind.HC1, False), scheme(centering="unrestricted")) is ThetaKind.THETA_HET
    assert theta_kind(StatisticSpec(HcKind.UC, False), scheme()) is ThetaKind.THETA_UC
    assert theta_kind(StatisticSpec(HcKind.HC1, True), scheme()) is ThetaKind.THETA_TILDE_HET_STAR
    assert theta_kind(StatisticSpec(HcKind.UC, True), scheme(centering="unrestricted")) is ThetaKind.THETA_TILDE_UC_MALT


@pytest.mark.parametrize("spec", [s for s in ALL_STATISTICS])
def test_full_restriction_shortcut(spec):
    p = TestingProblem(design(1, k=3), np.eye(3), np.zeros(3))
    rep = theta(p, spec, scheme(base="mammen", A="M0"))
    assert rep.value == 1.0 and rep.special_case_applied


def test_no_shortcut_for_restricted_statistic_under_ols_centering():
    p = TestingProblem(design(2, k=2), np.eye(2), np.zeros(2))
    rep = theta(p, StatisticSpec(HcKind.HC0, True), scheme(A="M0", centering="unrestricted"))
    assert not rep.special_case_applied
    assert 0.0 <= rep.value <= 1.0


def test_ones_column_matches_enumeration():
    X = np.ones((4, 1))
    p = TestingProblem(X, [[1.0]], [0.0])
    op = OracleProblem(X, [[1.0]], [0.0])
    rep = theta(p, StatisticSpec(HcKind.HC0, False), scheme())
    assert rep.value == oracle_theta(op, 0, False, "rademacher", 0, False, "SpanX", "restricted")


def test_matches_oracle_on_small_grid():
    X = np.column_stack([np.ones(4), [0.3, 1.7, 0.9, 2.4]])
    R = [[0.0, 1.0]]
    p = TestingProblem(X, R, [0.5])
    op = OracleProblem(X, R, [0.5])
    for spec, A, c, base in itertools.product(ALL_STATISTICS, ("M0", "SpanX"), ("restricted", "unrestricted"), ("rademacher", "mammen")):
        sch = scheme(base=base, A=A, centering=c, w=HcKind.HC3, wr=True)
        expected = oracle_theta(op, int(spec.hc), spec.restricted_residuals, base, 3, True, A, c)
        assert theta(p, spec, sch).value == expected


def test_second_branch_used_for_unit_vector_columns():
    X = np.column_stack([np.eye(5)[:, 0], np.ones(5), [0.2, 1.0, 3.0, 0.5, 1.5]])
    p = TestingProblem(X, [[1.0, 0.0, 0.0]], [0.0])
    rep = theta(p, StatisticSpec(HcKind.UC, False), scheme())
    branches = {e.index: e.branch for e in rep.per_index}
    assert branches[0] is Branch.THETA2


def test_mu0_independence():
    X = design(3, n=6, k=3)
    R = np.array([[0.0, 1.0, -1.0]])
    r = np.array([0.7])
    p = TestingProblem(X, R, r)
    other = p.mu0 + p.m0_lin_basis @ np.array([1.3, -0.4])

    class Shifted(TestingProblem):
        @property
        def mu0(self):  # noqa: D401
            return other

    q = Shifted(X, R, r)
    for spec in ALL_STATISTICS:
        for A in ("M0", "SpanX"):
            a = theta(p, spec, scheme(A=A)).value
            b = theta(q, spec, scheme(A=A)).value
            assert b == pytest.approx(a, abs=1e-10)


def test_assumption_violation_raised():
    p = TestingProblem(np.eye(5)[:, [0]], [[1.0]], [0.0])
    with pytest.raises(AssumptionViolation) as info:
        theta(p, StatisticSpec(HcKind.HC0, False), scheme())
    assert info.value.assumption == 1
    assert theta(p, StatisticSpec(HcKind.UC, False), scheme()).value <= 1.0


def test_empty_index_set():
    p = TestingProblem(design(4), [[0.0, 1.0]], [0.0])
    rep = theta(p, StatisticSpec(HcKind.HC0, False), scheme(), index_set=[])
    assert rep.value == 1.0 and rep.index_set == ()


def test_index_set_restricts():
    p = TestingProblem(design(5), [[0.0, 1.0]], [0.0])
    full = theta(p, StatisticSpec(HcKind.HC0, False), scheme())
    part = theta(p, StatisticSpec(HcKind.HC0, False), scheme(), index_set=[0, 2])
    assert part.value >= full.value
    assert [e.index for e in part.per_index] == [0, 2]
    with pytest.raises(ValueError):
        theta(p, StatisticSpec(HcKind.HC0, False), scheme(), index_set=[9])


def test_i_star_is_first_maximiser():
    p = TestingProblem(design(6, n=8), [[0.0, 1.0]], [0.0])
    rep = theta(p, StatisticSpec(HcKind.HC0, False), scheme())
    best = max(e.contribution for e in rep.per_index)
    assert rep.i_star == min(e.index for e in rep.per_index if e.contribution == best)
    assert rep.value == pytest.approx(1 - best)


def test_verdicts():
    p = TestingProblem(design(7), [[0.0, 1.0]], [0.0])
    rep = theta(p, StatisticSpec(HcKind.HC0, False), scheme())
    one = type(rep)(1.0, rep.kind, (), True, False)
    small = type(rep)(0.03, rep.kind, (), True, False)
    edge = type(rep)(0.05, rep.kind, (), True, False)
    assert theta_minus_alpha_verdict(one, 0.05) is Verdict.INCONCLUSIVE
    assert theta_minus_alpha_verdict(small, 0.05) is Verdict.SIZE_ONE
    assert theta_minus_alpha_verdict(edge, 0.05) is Verdict.INCONCLUSIVE
    with pytest.raises(ValueError):
        theta_minus_alpha_verdict(one, 1.5)


def test_q1_note_present():
    p = TestingProblem(design(8), [[0.0, 1.0]], [0.0])
    assert theta(p, StatisticSpec(HcKind.HC0, False), scheme()).notes


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(ALL_STATISTICS), st.booleans(), st.booleans())
def test_monotone_in_strict_inequality_tolerance(seed, spec, m0, restricted_centering):
    p = TestingProblem(design(seed, n=6, k=3), [[0.0, 0.0, 1.0]], [0.0])
    sch = scheme(A="M0" if m0 else "SpanX", centering="restricted" if restricted_centering else "unrestricted")
    lo = theta(p, spec, sch, Tolerances(strict_ineq_tol=1e-5)).value
    hi = theta(p, spec, sch, Tolerances(strict_ineq_tol=1e-1)).value
    assert hi >= lo


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([s for s in ALL_STATISTICS if not s.restricted_residuals]))
def test_centering_immaterial_for_unrestricted_statistics(seed, spec):
    p = TestingProblem(design(seed, n=6, k=3), [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0, 0.0])
    for A in ("M0", "SpanX"):
        a = theta(p, spec, scheme(A=A)).value
        b = theta(p, spec, scheme(A=A, centering="unrestricted")).value
        assert a == b

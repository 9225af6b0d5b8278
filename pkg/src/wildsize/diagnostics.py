"""Observable size-breakdown bounds for wild-bootstrap tests.

For a given design, statistic and bootstrap scheme, :func:`theta` computes a
number in [0, 1] with the property that every nominal level alpha strictly
above it yields a test whose size over all diagonal heteroskedastic
covariances equals one. It only needs the design: the computation evaluates
the statistic and its bootstrap law at the points mu0 + e_i.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import (
    BootstrapSchemeSpec,
    Centering,
    ResidualSpace,
    Support,
    bootstrap_statistics,
    multiplier_support,
)
from .errors import AssumptionViolation
from .linalg import DEFAULT_TOLERANCES, TestingProblem, Tolerances
from .statistics import (
    HcKind,
    StatisticSpec,
    check_assumption_1,
    check_assumption_2,
    evaluate_batch,
    unit_vectors_in_span,
)


class ThetaKind(enum.Enum):
    THETA_HET = "ThetaHet"
    THETA_UC = "ThetaUc"
    THETA_TILDE_HET_STAR = "ThetaTildeHet_Star"
    THETA_TILDE_UC_STAR = "ThetaTildeUc_Star"
    THETA_TILDE_HET_MALT = "ThetaTildeHet_Malt"
    THETA_TILDE_UC_MALT = "ThetaTildeUc_Malt"


class Branch(enum.Enum):
    THETA1 = "theta1"
    THETA2 = "theta2"
    SKIPPED = "skipped"


class Verdict(enum.Enum):
    SIZE_ONE = "SizeOne"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class IndexContribution:
    index: int
    contribution: float
    branch: Branch
    reason: str = ""


SHARPER_Q1_NOTE = (
    "for q = 1 the second-branch index range could be widened to unit vectors in the "
    "exceptional set with nonzero R beta_hat(e_i); this sharper variant is not used"
)


@dataclass(frozen=True)
class ThetaReport:
    value: float
    kind: ThetaKind
    per_index: tuple[IndexContribution, ...]
    assumption_ok: bool
    special_case_applied: bool
    index_set: tuple[int, ...] | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def i_star(self) -> int:
        """First index attaining the largest contribution (0 when nothing contributed)."""
        best = None
        for entry in self.per_index:
            if entry.branch is Branch.SKIPPED:
                continue
            if best is None or entry.contribution > best.contribution:
                best = entry
        return 0 if best is None else best.index


def theta_kind(stat: StatisticSpec, scheme: BootstrapSchemeSpec) -> ThetaKind:
    uc = stat.hc is HcKind.UC
    if not stat.restricted_residuals:
        return ThetaKind.THETA_UC if uc else ThetaKind.THETA_HET
    if scheme.centering is Centering.RESTRICTED:
        return ThetaKind.THETA_TILDE_UC_STAR if uc else ThetaKind.THETA_TILDE_HET_STAR
    return ThetaKind.THETA_TILDE_UC_MALT if uc else ThetaKind.THETA_TILDE_HET_MALT


def special_case_applies(problem: TestingProblem, stat: StatisticSpec, scheme: BootstrapSchemeSpec) -> bool:
    """q = k with restricted residual space: every admissible point keeps its own value under resampling.

    Both multiplier bases have no atom at zero, so that condition is always met.
    The shortcut does not cover restricted-residual statistics under y-dagger
    centering.
    """
    if problem.q != problem.k or scheme.residual_space is not ResidualSpace.M0:
        return False
    return scheme.centering is Centering.RESTRICTED or not stat.restricted_residuals


def check_assumption(problem: TestingProblem, stat: StatisticSpec, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """The rank assumption that the statistic needs (always true for the uncorrected ones)."""
    if stat.hc is HcKind.UC:
        return True
    if stat.restricted_residuals:
        return check_assumption_2(problem, tol)
    return check_assumption_1(problem, tol)


def theta(
    problem: TestingProblem,
    stat: StatisticSpec,
    scheme: BootstrapSchemeSpec,
    tol: Tolerances = DEFAULT_TOLERANCES,
    index_set=None,
    rng_seed: int | None = None,
    support: Support | None = None,
) -> ThetaReport:
    """Size-breakdown bound for (design, statistic, bootstrap scheme).

    ``index_set`` restricts the unit vectors considered (0-based indices); it
    corresponds to covariance models whose closure contains the matching
    degenerate covariances. ``support`` overrides the weighted multiplier
    support, which is otherwise built from ``scheme`` and ``rng_seed``.
    """
    kind = theta_kind(stat, scheme)
    if stat.hc is not HcKind.UC and not check_assumption(problem, stat, tol):
        raise AssumptionViolation(2 if stat.restricted_residuals else 1)
    indices = tuple(range(problem.n)) if index_set is None else tuple(sorted({int(i) for i in index_set}))
    if any(i < 0 or i >= problem.n for i in indices):
        raise ValueError(f"index_set entries must lie in 0..{problem.n - 1}")
    notes = (SHARPER_Q1_NOTE,) if problem.q == 1 and not stat.restricted_residuals else ()
    recorded_set = None if index_set is None else indices

    if special_case_applies(problem, stat, scheme):
        return ThetaReport(1.0, kind, (), True, True, recorded_set, notes)
    if not indices:
        return ThetaReport(1.0, kind, (), True, False, recorded_set, notes)

    if support is None:
        support = multiplier_support(scheme, problem, rng_seed)
    idx = np.array(indices)
    points = problem.mu0 + np.eye(problem.n)[idx]
    observed, obs_exc = evaluate_batch(problem, stat, points, tol)

    theta2_ok = np.zeros(len(idx), dtype=bool)
    if not stat.restricted_residuals:
        in_span = unit_vectors_in_span(problem, tol)[idx]
        moves = np.abs(problem.L[:, idx]).max(axis=0) > tol.rbeta_nonzero_tol
        theta2_ok = in_span & moves

    active = (~obs_exc) | theta2_ok
    contributions = np.zeros(len(idx))
    if active.any():
        boot, boot_exc = bootstrap_statistics(problem, stat, scheme, points[active], support.xi, tol)
        for row, j in enumerate(np.flatnonzero(active)):
            if not obs_exc[j]:
                margin = tol.strict_ineq_tol + tol.strict_ineq_rtol * abs(observed[j])
                below = (~boot_exc[row]) & (boot[row] + margin < observed[j])
            else:
                below = ~boot_exc[row]
            contributions[j] = support.total_mass(below)

    per_index = []
    for j, i in enumerate(indices):
        if not obs_exc[j]:
            per_index.append(IndexContribution(i, float(contributions[j]), Branch.THETA1))
        elif theta2_ok[j]:
            per_index.append(IndexContribution(i, float(contributions[j]), Branch.THETA2))
        else:
            per_index.append(IndexContribution(i, 0.0, Branch.SKIPPED, "statistic exceptional at mu0 + e_i"))
    used = [e.contribution for e in per_index if e.branch is not Branch.SKIPPED]
    value = max(0.0, 1.0 - max(used, default=0.0))
    return ThetaReport(value, kind, tuple(per_index), True, False, recorded_set, notes)


def theta_minus_alpha_verdict(report: ThetaReport, alpha: float) -> Verdict:
    """SizeOne when alpha strictly exceeds the bound; otherwise nothing can be concluded."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return Verdict.SIZE_ONE if alpha > report.value else Verdict.INCONCLUSIVE


__all__ = [
    "Branch",
    "IndexContribution",
    "ThetaKind",
    "ThetaReport",
    "Verdict",
    "check_assumption",
    "special_case_applies",
    "theta",
    "theta_kind",
    "theta_minus_alpha_verdict",
]

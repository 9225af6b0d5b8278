"""Heteroskedasticity-robust and classical Wald-type statistics.

There are twelve statistics: the uncorrected F-type statistic and HC0-HC4,
each built either from OLS residuals or from null-restricted residuals. None
are normalized by q. Every statistic has an exceptional set (singular
covariance estimate, or vanishing residual variance) on which its value is 0.

The workhorse is :func:`evaluate_batch`, which evaluates one statistic at a
stack of observation vectors. The scalar :func:`statistic` is a thin wrapper
around it so the two code paths cannot drift apart.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linalg import (
    DEFAULT_TOLERANCES,
    TestingProblem,
    Tolerances,
    batch_invertible,
    leverages,
    lu_pivots,
    numerical_rank,
    ranks_from_pivots,
)

LEVERAGE_ONE_TOL = 1e-12


class HcKind(enum.IntEnum):
    UC = -1
    HC0 = 0
    HC1 = 1
    HC2 = 2
    HC3 = 3
    HC4 = 4


@dataclass(frozen=True)
class StatisticSpec:
    """Which statistic: covariance estimator and residual type."""

    hc: HcKind
    restricted_residuals: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hc", HcKind(self.hc))

    @property
    def label(self) -> str:
        if self.hc is HcKind.UC:
            return "T~uc" if self.restricted_residuals else "Tuc"
        suffix = "R" if self.restricted_residuals else ""
        return f"HC{int(self.hc)}{suffix}"


ALL_STATISTICS = tuple(
    StatisticSpec(hc, restricted) for restricted in (False, True) for hc in HcKind
)


@dataclass(frozen=True)
class StatisticValue:
    value: float
    exceptional: bool


def _leverage_family(problem: TestingProblem, restricted: bool):
    lev = leverages(problem)
    if restricted:
        return lev.h_tilde, problem.k - problem.q
    return lev.h, problem.k


def hc_multipliers(problem: TestingProblem, hc: HcKind, restricted: bool) -> np.ndarray:
    """Per-observation multipliers d_i (or d~_i) of the HC covariance estimators."""
    hc = HcKind(hc)
    if hc is HcKind.UC:
        raise ValueError("the uncorrected statistic has no HC multipliers")
    return problem.memo(("d", hc, restricted), lambda: _multipliers(problem, hc, restricted, 1.0))


def bootstrap_weights(problem: TestingProblem, hc: HcKind, restricted: bool) -> np.ndarray:
    """Wild-bootstrap weights w_i: the square-root analogues of the HC multipliers."""
    hc = HcKind(hc)
    if hc is HcKind.UC:
        raise ValueError("bootstrap weights are defined for HC0-HC4 only")
    return problem.memo(("w", hc, restricted), lambda: _multipliers(problem, hc, restricted, 0.5))


def _multipliers(problem: TestingProblem, hc: HcKind, restricted: bool, power: float) -> np.ndarray:
    n = problem.n
    h, dim = _leverage_family(problem, restricted)
    if hc is HcKind.HC0:
        out = np.ones(n)
    elif hc is HcKind.HC1:
        out = np.full(n, (n / (n - dim)) ** power)
    else:
        one = h >= 1.0 - LEVERAGE_ONE_TOL
        base = np.where(one, 1.0, 1.0 - h)
        if hc is HcKind.HC2:
            expo = np.ones(n)
        elif hc is HcKind.HC3:
            expo = np.full(n, 2.0)
        elif dim == 0:
            expo = np.zeros(n)
        else:
            expo = np.minimum(n * h / dim, 4.0)
        out = np.where(one, 1.0, base ** (-power * expo))
    out.setflags(write=False)
    return out


def residual_batch(
    problem: TestingProblem,
    Y: np.ndarray,
    restricted: bool,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """OLS residuals (or null-restricted residuals) for each row of ``Y``.

    Entries that are pure rounding noise relative to the row scale are set to
    exactly zero, so that y in span(X) (or in M0) lands in the exceptional set
    instead of producing a quotient of two round-off terms.
    """
    Y = np.atleast_2d(Y)
    if restricted:
        Z = Y - problem.mu0
        U = Z @ problem.restricted_resid_maker
    else:
        Z = Y
        U = Y @ problem.resid_maker
    scale = np.abs(Z).max(axis=1, keepdims=True)
    U[np.abs(U) <= tol.resid_zero_rtol * scale] = 0.0
    return U


def evaluate_batch(
    problem: TestingProblem,
    spec: StatisticSpec,
    Y: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
    center: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a statistic at every row of ``Y`` (shape ``(N, n)``).

    ``center`` replaces r in the numerator ``R beta_hat(y) - r``; it may be a
    single q-vector or one per row. Returns ``(values, exceptional)``, with
    values set to 0 on the exceptional set.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    num = Y @ problem.L.T - (problem.r if center is None else center)
    U = residual_batch(problem, Y, spec.restricted_residuals, tol)
    N, q = num.shape
    values = np.zeros(N)

    if spec.hc is HcKind.UC:
        df = problem.n - (problem.k - problem.q if spec.restricted_residuals else problem.k)
        s2 = np.einsum("ij,ij->i", U, U) / df
        ok = s2 > tol.resid_var_tol
        quad = np.einsum("ij,jk,ik->i", num[ok], problem.V_inv, num[ok])
        values[ok] = quad / s2[ok]
        return np.maximum(values, 0.0), ~ok

    d = hc_multipliers(problem, spec.hc, spec.restricted_residuals)
    omega = ((U * U) * d) @ problem.outer_table
    if q == 1:
        om = omega[:, 0]
        ok = om != 0.0
        values[ok] = num[ok, 0] ** 2 / om[ok]
        return np.maximum(values, 0.0), ~ok
    omega = omega.reshape(N, q, q)
    ok = batch_invertible(omega, tol.invertibility_tol)
    if ok.any():
        v = num[ok]
        sol = np.linalg.solve(omega[ok], v[:, :, None])[:, :, 0]
        values[ok] = np.einsum("ij,ij->i", v, sol)
    return np.maximum(values, 0.0), ~ok


def statistic(
    problem: TestingProblem,
    spec: StatisticSpec,
    y: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> StatisticValue:
    """Value of the statistic at a single observation vector ``y``."""
    values, exc = evaluate_batch(problem, spec, np.asarray(y, dtype=float)[None, :], tol)
    return StatisticValue(value=float(values[0]), exceptional=bool(exc[0]))


def covariance_estimate(
    problem: TestingProblem,
    spec: StatisticSpec,
    y: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """The q x q matrix whose inverse weights the quadratic form at ``y``."""
    U = residual_batch(problem, np.asarray(y, dtype=float)[None, :], spec.restricted_residuals, tol)[0]
    if spec.hc is HcKind.UC:
        df = problem.n - (problem.k - problem.q if spec.restricted_residuals else problem.k)
        return (U @ U / df) * problem.V
    d = hc_multipliers(problem, spec.hc, spec.restricted_residuals)
    return ((U * U * d) @ problem.outer_table).reshape(problem.q, problem.q)


# ---------------------------------------------------------------------------
# rank assumptions
# ---------------------------------------------------------------------------


def _basis_contains_unit_vectors(basis: np.ndarray, tol: float) -> np.ndarray:
    """For each i, whether e_i lies in span(basis) according to an LU rank test."""
    n, dim = basis.shape
    if dim == 0:
        return np.zeros(n, dtype=bool)
    stack = np.repeat(basis[None, :, :], n, axis=0)
    stack = np.concatenate([stack, np.eye(n)[:, :, None]], axis=2)
    return ranks_from_pivots(lu_pivots(stack), tol) < dim + 1


def unit_vectors_in_span(problem: TestingProblem, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Boolean mask of indices i with e_i in span(X)."""
    return problem.memo(
        ("span_e", tol.span_rank_tol),
        lambda: _basis_contains_unit_vectors(problem.X, tol.span_rank_tol),
    )


def unit_vectors_in_m0_lin(problem: TestingProblem, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Boolean mask of indices i with e_i in M0_lin."""
    return problem.memo(
        ("m0_e", tol.span_rank_tol),
        lambda: _basis_contains_unit_vectors(problem.m0_lin_basis, tol.span_rank_tol),
    )


def _reduced_rank_ok(problem: TestingProblem, drop: np.ndarray, tol: Tolerances) -> bool:
    keep = ~drop
    if not keep.any():
        return False
    return numerical_rank(problem.L[:, keep], tol.assumption_rank_tol) == problem.q


def check_assumption_1(problem: TestingProblem, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """Rank condition making the unrestricted HC exceptional set Lebesgue-null."""
    return _reduced_rank_ok(problem, unit_vectors_in_span(problem, tol), tol)


def check_assumption_2(problem: TestingProblem, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """Rank condition making the restricted HC exceptional set Lebesgue-null."""
    return _reduced_rank_ok(problem, unit_vectors_in_m0_lin(problem, tol), tol)

"""Least-squares machinery for small dense regression problems.

Everything here works on designs with n up to a few hundred rows and k <= ~10
columns. The :class:`TestingProblem` caches the derived matrices (hat matrix,
restricted projector, ``R (X'X)^-1 X'``) that every statistic evaluation needs,
so callers should build one problem per (X, R, r) and reuse it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg as sla

from .errors import RestrictionError, SingularDesignError

MACHINE_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used by the exceptional-set and rank checks.

    The defaults err in the direction that makes computed bounds larger
    (i.e. in favour of the bootstrap test).
    """

    invertibility_tol: float = 1e-6
    strict_ineq_tol: float = 1e-5
    # relative part of the same guard, so rounding-level ties at large T never count as strict
    strict_ineq_rtol: float = 1e-9
    rbeta_nonzero_tol: float = 1e-6
    span_rank_tol: float = MACHINE_EPS
    assumption_rank_tol: float = 1e-7
    resid_var_tol: float = 1e-6
    # relative slack for "T* >= T" in bootstrap p-values; only absorbs rounding on exact ties
    pvalue_tie_rtol: float = 1e-9
    # residual entries below this fraction of max|y| are rounding noise and count as exact zeros
    resid_zero_rtol: float = 1e-12

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"tolerance {name} must be strictly positive, got {value}")


DEFAULT_TOLERANCES = Tolerances()


# ---------------------------------------------------------------------------
# rank decisions
# ---------------------------------------------------------------------------


def lu_pivots(A: np.ndarray) -> np.ndarray:
    """Pivots of a complete-pivoting LU factorization, for a stack of matrices.

    ``A`` has shape ``(..., m, p)``; the result has shape ``(..., min(m, p))``
    and holds the diagonal of U in elimination order.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim < 2 or A.shape[-1] == 0 or A.shape[-2] == 0:
        raise ValueError("lu_pivots needs a non-empty matrix")
    batch_shape = A.shape[:-2]
    m, p = A.shape[-2:]
    A = A.reshape(-1, m, p)
    N = A.shape[0]
    steps = min(m, p)
    rows = np.arange(N)
    piv = np.zeros((N, steps))
    for s in range(steps):
        sub = np.abs(A[:, s:, s:]).reshape(N, -1)
        flat = np.argmax(sub, axis=1)
        width = p - s
        pr = flat // width + s
        pc = flat % width + s
        if np.any(pr != s):
            tmp = A[rows, s, :].copy()
            A[rows, s, :] = A[rows, pr, :]
            A[rows, pr, :] = tmp
        if np.any(pc != s):
            tmp = A[rows, :, s].copy()
            A[rows, :, s] = A[rows, :, pc]
            A[rows, :, pc] = tmp
        pivot = A[:, s, s]
        piv[:, s] = pivot
        if s + 1 < m and s + 1 <= p:
            safe = np.where(pivot != 0.0, pivot, 1.0)
            factor = np.where(pivot[:, None] != 0.0, A[:, s + 1:, s] / safe[:, None], 0.0)
            A[:, s + 1:, s + 1:] -= factor[:, :, None] * A[:, s, None, s + 1:]
            A[:, s + 1:, s] = 0.0
    return piv.reshape(*batch_shape, steps)


def ranks_from_pivots(piv: np.ndarray, tol: float) -> np.ndarray:
    """Count pivots whose magnitude exceeds ``tol`` times the largest pivot."""
    mag = np.abs(piv)
    threshold = tol * mag.max(axis=-1, keepdims=True)
    return np.sum(mag > threshold, axis=-1)


def numerical_rank(M: np.ndarray, tol: float) -> int:
    """Rank of ``M`` decided from a complete-pivoting LU factorization.

    A pivot counts as nonzero when ``|pivot| > tol * |largest pivot|``. The
    result is monotone non-increasing in ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        raise ValueError("numerical_rank of an empty matrix is undefined")
    return int(ranks_from_pivots(lu_pivots(M), tol))


def is_invertible(M: np.ndarray, tol: float) -> bool:
    """True iff ``numerical_rank(M, tol)`` equals the dimension of square ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"is_invertible needs a square matrix, got shape {M.shape}")
    return numerical_rank(M, tol) == M.shape[0]


def batch_invertible(stack: np.ndarray, tol: float) -> np.ndarray:
    """Vectorized :func:`is_invertible` over a ``(N, q, q)`` stack."""
    q = stack.shape[-1]
    if q == 1:
        # a 1x1 pivot is its own maximum: invertible iff nonzero
        return stack[..., 0, 0] != 0.0
    return ranks_from_pivots(lu_pivots(stack), tol) == q


# ---------------------------------------------------------------------------
# the testing problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestingProblem:
    """Design X (n x k) and affine restriction R beta = r (R is q x k)."""

    __test__ = False  # keep pytest from collecting this as a test class

    X: np.ndarray
    R: np.ndarray
    r: np.ndarray
    rank_tol: float = field(default=DEFAULT_TOLERANCES.assumption_rank_tol, repr=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        R = np.atleast_2d(np.array(self.R, dtype=float))
        r = np.atleast_1d(np.array(self.r, dtype=float)).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)
        for arr in (X, R, r):
            arr.setflags(write=False)
        n, k = X.shape
        if not 1 <= k < n:
            raise SingularDesignError(f"need 1 <= k < n, got n={n}, k={k}")
        if R.shape[1] != k:
            raise RestrictionError(f"R has {R.shape[1]} columns but X has {k}")
        q = R.shape[0]
        if not 1 <= q <= k:
            raise RestrictionError(f"need 1 <= q <= k, got q={q}, k={k}")
        if r.shape != (q,):
            raise RestrictionError(f"r must have length q={q}, got {r.shape}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(R)) or not np.all(np.isfinite(r)):
            raise SingularDesignError("X, R and r must be finite")
        if numerical_rank(X, self.rank_tol) < k:
            raise SingularDesignError("design matrix X does not have full column rank")
        if numerical_rank(R, self.rank_tol) < q:
            raise RestrictionError("restriction matrix R does not have full row rank")
        object.__setattr__(self, "_memo", {})

    def memo(self, key, factory):
        """Per-problem cache for derived quantities keyed by ``key``."""
        try:
            return self._memo[key]
        except KeyError:
            value = self._memo[key] = factory()
            return value

    @classmethod
    def last_q(cls, X: np.ndarray, q: int) -> "TestingProblem":
        """Restriction R = (0 : I_q), r = 0, i.e. the last q coefficients vanish."""
        X = np.asarray(X, dtype=float)
        k = X.shape[1]
        R = np.hstack([np.zeros((q, k - q)), np.eye(q)])
        return cls(X, R, np.zeros(q))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.R.shape[0]

    @cached_property
    def xtx_inv(self) -> np.ndarray:
        xtx = self.X.T @ self.X
        try:
            inv = sla.inv(xtx)
        except (sla.LinAlgError, ValueError) as exc:
            raise SingularDesignError("X'X is singular") from exc
        return 0.5 * (inv + inv.T)

    @cached_property
    def L(self) -> np.ndarray:
        """R (X'X)^-1 X', the map y -> R beta_hat(y)."""
        return self.R @ self.xtx_inv @ self.X.T

    @cached_property
    def V(self) -> np.ndarray:
        """R (X'X)^-1 R'."""
        V = self.R @ self.xtx_inv @ self.R.T
        return 0.5 * (V + V.T)

    @cached_property
    def V_inv(self) -> np.ndarray:
        try:
            inv = sla.inv(self.V)
        except (sla.LinAlgError, ValueError) as exc:
            raise RestrictionError("R (X'X)^-1 R' is singular") from exc
        return 0.5 * (inv + inv.T)

    @cached_property
    def hat(self) -> np.ndarray:
        H = self.X @ self.xtx_inv @ self.X.T
        return 0.5 * (H + H.T)

    @cached_property
    def resid_maker(self) -> np.ndarray:
        """I - hat, the projector onto span(X)-perp."""
        return np.eye(self.n) - self.hat

    @cached_property
    def restricted_hat(self) -> np.ndarray:
        """Orthogonal projector onto M0_lin = {X b : R b = 0}."""
        G = self.X @ self.xtx_inv @ self.R.T
        P = self.hat - G @ self.V_inv @ G.T
        return 0.5 * (P + P.T)

    @cached_property
    def restricted_resid_maker(self) -> np.ndarray:
        """I - projector onto M0_lin."""
        return np.eye(self.n) - self.restricted_hat

    @cached_property
    def beta0(self) -> np.ndarray:
        """Minimum-norm solution of R b = r."""
        if not np.any(self.r):
            return np.zeros(self.k)
        return np.linalg.lstsq(self.R, self.r, rcond=None)[0]

    @cached_property
    def mu0(self) -> np.ndarray:
        """A fixed representative of the affine null space M0."""
        if not np.any(self.r):
            return np.zeros(self.n)
        return self.X @ self.beta0

    @cached_property
    def null_basis(self) -> np.ndarray:
        """Orthonormal basis (k x (k-q)) of the null space of R."""
        return sla.null_space(self.R)

    @cached_property
    def m0_lin_basis(self) -> np.ndarray:
        """Basis (n x (k-q)) of M0_lin."""
        return self.X @ self.null_basis

    @cached_property
    def outer_table(self) -> np.ndarray:
        """Row i holds vec(l_i l_i') where l_i is column i of L; shape (n, q*q).

        With this table, R Psi R' for weights ``w`` is ``w @ outer_table``.
        """
        L = self.L
        return np.einsum("ai,bi->iab", L, L).reshape(self.n, self.q * self.q)


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray


@dataclass(frozen=True)
class RestrictedFitResult:
    beta_tilde: np.ndarray
    residuals: np.ndarray


@dataclass(frozen=True)
class Leverages:
    h: np.ndarray
    h_tilde: np.ndarray


def ols_fit(problem: TestingProblem, y: np.ndarray) -> FitResult:
    """OLS of y on X through a QR factorization."""
    y = np.asarray(y, dtype=float)
    Q, Rq = np.linalg.qr(problem.X)
    diag = np.abs(np.diag(Rq))
    if diag.min() <= MACHINE_EPS * diag.max() * problem.n:
        raise SingularDesignError("X'X is numerically singular")
    beta = sla.solve_triangular(Rq, Q.T @ y)
    fitted = problem.X @ beta
    return FitResult(beta_hat=beta, residuals=y - fitted, fitted=fitted)


def restricted_fit(problem: TestingProblem, y: np.ndarray, space: str = "M0") -> RestrictedFitResult:
    """Least squares over the affine space ``space``: ``"M0"`` or ``"SpanX"``."""
    fit = ols_fit(problem, y)
    if space == "SpanX":
        return RestrictedFitResult(beta_tilde=fit.beta_hat, residuals=fit.residuals)
    if space != "M0":
        raise ValueError(f"unknown space {space!r}; expected 'M0' or 'SpanX'")
    gap = problem.R @ fit.beta_hat - problem.r
    try:
        adj = sla.solve(problem.V, gap, assume_a="pos")
    except (sla.LinAlgError, ValueError) as exc:
        raise RestrictionError("R (X'X)^-1 R' is singular") from exc
    beta = fit.beta_hat - problem.xtx_inv @ problem.R.T @ adj
    return RestrictedFitResult(beta_tilde=beta, residuals=np.asarray(y, dtype=float) - problem.X @ beta)


def leverages(problem: TestingProblem) -> Leverages:
    """Diagonals of the hat matrix and of the projector onto M0_lin."""
    h = np.clip(np.diag(problem.hat).copy(), 0.0, 1.0)
    h_tilde = np.clip(np.diag(problem.restricted_hat).copy(), 0.0, 1.0)
    return Leverages(h=h, h_tilde=np.minimum(h_tilde, h))

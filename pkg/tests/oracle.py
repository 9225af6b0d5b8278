"""Brute-force reference implementation used as a test oracle.

Written without touching the package: plain loops, explicit formulas, its own
complete-pivoting elimination and a full enumeration of the multiplier
support. It follows the same conventions as the package (exceptional-set
gates, tolerances, residual snapping, the +inf convention for bootstrap draws)
but computes everything along an independent code path.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import null_space

EPS = float(np.finfo(float).eps)
INVERT_TOL = 1e-6
INEQ_TOL = 1e-5
INEQ_RTOL = 1e-9
RBETA_TOL = 1e-6
ASSUMPTION_TOL = 1e-7
RESID_VAR_TOL = 1e-6
RESID_ZERO_RTOL = 1e-12
LEVERAGE_ONE = 1e-12

SQ5 = math.sqrt(5.0)
ATOMS = {
    "rademacher": ((-1.0, 0.5), (1.0, 0.5)),
    "mammen": ((-(SQ5 - 1.0) / 2.0, (SQ5 + 1.0) / (2.0 * SQ5)), ((SQ5 + 1.0) / 2.0, (SQ5 - 1.0) / (2.0 * SQ5))),
}


def pivot_rank(M, tol):
    """Rank by complete-pivoting Gaussian elimination, one scalar at a time."""
    A = [list(map(float, row)) for row in np.atleast_2d(M)]
    m, p = len(A), len(A[0])
    pivots = []
    for s in range(min(m, p)):
        best, br, bc = -1.0, s, s
        for i in range(s, m):
            for j in range(s, p):
                if abs(A[i][j]) > best:
                    best, br, bc = abs(A[i][j]), i, j
        A[s], A[br] = A[br], A[s]
        for row in A:
            row[s], row[bc] = row[bc], row[s]
        piv = A[s][s]
        pivots.append(piv)
        if piv != 0.0:
            for i in range(s + 1, m):
                f = A[i][s] / piv
                for j in range(s + 1, p):
                    A[i][j] -= f * A[s][j]
                A[i][s] = 0.0
    top = max(abs(v) for v in pivots)
    return sum(1 for v in pivots if abs(v) > tol * top)


class OracleProblem:
    def __init__(self, X, R, r):
        self.X = np.array(X, dtype=float)
        self.R = np.atleast_2d(np.array(R, dtype=float))
        self.r = np.atleast_1d(np.array(r, dtype=float))
        self.n, self.k = self.X.shape
        self.q = self.R.shape[0]
        self.xtx_inv = np.linalg.inv(self.X.T @ self.X)
        self.H = self.X @ self.xtx_inv @ self.X.T
        self.L = self.R @ self.xtx_inv @ self.X.T
        self.V = self.R @ self.xtx_inv @ self.R.T
        self.basis = self.X @ null_space(self.R)  # spans {X b : R b = 0}
        if self.basis.shape[1]:
            B = self.basis
            self.P0 = B @ np.linalg.inv(B.T @ B) @ B.T
        else:
            self.P0 = np.zeros((self.n, self.n))
        self.mu0 = self.X @ (np.linalg.pinv(self.R) @ self.r) if np.any(self.r) else np.zeros(self.n)

    def unit(self, i):
        e = np.zeros(self.n)
        e[i] = 1.0
        return e

    def e_in(self, basis, i):
        if basis.shape[1] == 0:
            return False
        return pivot_rank(np.column_stack([basis, self.unit(i)]), EPS) < basis.shape[1] + 1

    def multipliers(self, hc, restricted, power):
        n = self.n
        h = [min(max(self.H[i, i], 0.0), 1.0) for i in range(n)]
        if restricted:
            h = [min(min(max(self.P0[i, i], 0.0), 1.0), h[i]) for i in range(n)]
            dim = self.k - self.q
        else:
            dim = self.k
        out = []
        for i in range(n):
            if hc == 0:
                out.append(1.0)
            elif hc == 1:
                out.append((n / (n - dim)) ** power)
            elif h[i] >= 1.0 - LEVERAGE_ONE:
                out.append(1.0)
            else:
                if hc == 2:
                    e = 1.0
                elif hc == 3:
                    e = 2.0
                else:
                    e = 0.0 if dim == 0 else min(n * h[i] / dim, 4.0)
                out.append((1.0 - h[i]) ** (-power * e))
        return np.array(out)

    def residuals(self, y, restricted):
        z = y - self.mu0 if restricted else y.copy()
        proj = self.P0 if restricted else self.H
        u = z - proj @ z
        scale = max(abs(v) for v in z)
        return np.array([0.0 if abs(v) <= RESID_ZERO_RTOL * scale else v for v in u])

    def stat(self, hc, restricted, y, centre=None):
        """(value, exceptional) of the statistic at y."""
        num = self.L @ y - (self.r if centre is None else centre)
        u = self.residuals(y, restricted)
        if hc == -1:
            df = self.n - (self.k - self.q if restricted else self.k)
            s2 = sum(v * v for v in u) / df
            if not s2 > RESID_VAR_TOL:
                return 0.0, True
            return float(num @ np.linalg.solve(self.V, num)) / s2, False
        d = self.multipliers(hc, restricted, 1.0)
        omega = np.zeros((self.q, self.q))
        for i in range(self.n):
            omega += d[i] * u[i] ** 2 * np.outer(self.L[:, i], self.L[:, i])
        if self.q == 1:
            if omega[0, 0] == 0.0:
                return 0.0, True
            return max(num[0] ** 2 / omega[0, 0], 0.0), False
        if pivot_rank(omega, INVERT_TOL) < self.q:
            return 0.0, True
        return max(float(num @ np.linalg.solve(omega, num)), 0.0), False

    def assumption(self, restricted):
        basis = self.basis if restricted else self.X
        keep = [i for i in range(self.n) if not self.e_in(basis, i)]
        if not keep:
            return False
        return pivot_rank(self.L[:, keep], ASSUMPTION_TOL) == self.q


def support(base, w):
    pts = []
    for pattern in itertools.product((0, 1), repeat=len(w)):
        mass = 1.0
        xi = []
        for j, b in enumerate(pattern):
            atom, pr = ATOMS[base][b]
            mass *= pr
            xi.append(w[j] * atom)
        pts.append((np.array(xi), mass))
    return pts


def boot_value(op, hc, restricted, A, centering, y, xi):
    """Bootstrapped statistic (+inf when exceptional) and its exceptional flag."""
    fit0 = op.mu0 + op.P0 @ (y - op.mu0)
    fit = op.H @ y
    res = y - (fit0 if A == "M0" else fit)
    if centering == "restricted":
        ys = fit0 + xi * res
        v, exc = op.stat(hc, restricted, ys)
    else:
        ys = fit + xi * res
        v, exc = op.stat(hc, restricted, ys, centre=op.L @ y)
    return (math.inf if exc else v), exc


def oracle_theta(op, hc, restricted, base, weight_hc, weight_restricted, A, centering):
    """Size-breakdown bound by direct enumeration; returns None when the rank assumption fails."""
    if hc != -1 and not op.assumption(restricted):
        return None
    w = op.multipliers(weight_hc, weight_restricted, 0.5)
    pts = support(base, w)
    contributions = []
    for i in range(op.n):
        y = op.mu0 + op.unit(i)
        t, exc = op.stat(hc, restricted, y)
        if not exc:
            hits = []
            for xi, mass in pts:
                b, bexc = boot_value(op, hc, restricted, A, centering, y, xi)
                if not bexc and b + INEQ_TOL + INEQ_RTOL * abs(t) < t:
                    hits.append(mass)
            contributions.append(math.fsum(hits))
        elif not restricted and op.e_in(op.X, i) and max(abs(op.L[:, i])) > RBETA_TOL:
            hits = []
            for xi, mass in pts:
                _, bexc = boot_value(op, hc, restricted, A, centering, y, xi)
                if not bexc:
                    hits.append(mass)
            contributions.append(math.fsum(hits))
    return max(0.0, 1.0 - max(contributions, default=0.0))


def oracle_pvalue(op, hc, restricted, base, weight_hc, weight_restricted, A, centering, y, tie_rtol=1e-9):
    t, _ = op.stat(hc, restricted, y)
    w = op.multipliers(weight_hc, weight_restricted, 0.5)
    hits = []
    for xi, mass in support(base, w):
        b, _ = boot_value(op, hc, restricted, A, centering, y, xi)
        if b >= t * (1.0 - tie_rtol):
            hits.append(mass)
    return math.fsum(hits)

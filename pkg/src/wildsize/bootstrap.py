"""Wild-bootstrap multiplier laws, bootstrap samples and bootstrap p-values.

A bootstrap scheme fixes the multiplier base (Rademacher or Mammen, either
fully enumerated or as a fixed empirical sample), the leverage weights that
rescale the multipliers, the affine space whose residuals are resampled, and
whether bootstrap samples are centred at the restricted or the unrestricted
fit.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationCapError
from .linalg import DEFAULT_TOLERANCES, TestingProblem, Tolerances
from .statistics import HcKind, StatisticSpec, bootstrap_weights, evaluate_batch

ENUMERATION_CAP = 14

SQRT5 = math.sqrt(5.0)
MAMMEN_ATOMS = (-(SQRT5 - 1.0) / 2.0, (SQRT5 + 1.0) / 2.0)
MAMMEN_MASSES = ((SQRT5 + 1.0) / (2.0 * SQRT5), (SQRT5 - 1.0) / (2.0 * SQRT5))
RADEMACHER_ATOMS = (-1.0, 1.0)
RADEMACHER_MASSES = (0.5, 0.5)


class BaseKind(enum.Enum):
    RADEMACHER = "rademacher"
    MAMMEN = "mammen"
    EMPIRICAL_RADEMACHER = "empirical_rademacher"
    EMPIRICAL_MAMMEN = "empirical_mammen"


class ResidualSpace(enum.Enum):
    M0 = "M0"
    SPAN_X = "SpanX"


class Centering(enum.Enum):
    RESTRICTED = "restricted"  # y*: centred at the restricted fit
    UNRESTRICTED = "unrestricted"  # y-dagger: centred at the OLS fit


@dataclass(frozen=True)
class MultiplierBase:
    """Law of the unweighted multiplier vector.

    ``m`` is the number of stored draws for the empirical kinds; ``None``
    means the usual ``10 n - 1``.
    """

    kind: BaseKind
    m: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BaseKind(self.kind))
        if self.m is not None and self.m < 1:
            raise ValueError("empirical sample size m must be positive")

    @property
    def empirical(self) -> bool:
        return self.kind in (BaseKind.EMPIRICAL_RADEMACHER, BaseKind.EMPIRICAL_MAMMEN)

    @property
    def mammen(self) -> bool:
        return self.kind in (BaseKind.MAMMEN, BaseKind.EMPIRICAL_MAMMEN)

    def atoms(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (MAMMEN_ATOMS, MAMMEN_MASSES) if self.mammen else (RADEMACHER_ATOMS, RADEMACHER_MASSES)

    def sample_size(self, n: int) -> int:
        return self.m if self.m is not None else 10 * n - 1


@dataclass(frozen=True)
class BootstrapSchemeSpec:
    base: MultiplierBase
    weight_hc: HcKind = HcKind.HC0
    weight_restricted: bool = False
    residual_space: ResidualSpace = ResidualSpace.SPAN_X
    centering: Centering = Centering.RESTRICTED

    def __post_init__(self):
        object.__setattr__(self, "weight_hc", HcKind(self.weight_hc))
        object.__setattr__(self, "residual_space", ResidualSpace(self.residual_space))
        object.__setattr__(self, "centering", Centering(self.centering))
        if self.weight_hc is HcKind.UC:
            raise ValueError("bootstrap weights must be one of HC0-HC4")


@dataclass(frozen=True)
class SupportPoint:
    xi: np.ndarray
    mass: float


@dataclass(frozen=True)
class Support:
    """All support points at once: ``xi`` has shape ``(S, n)``, ``mass`` shape ``(S,)``."""

    xi: np.ndarray
    mass: np.ndarray

    def __len__(self) -> int:
        return self.mass.shape[0]

    def points(self) -> list[SupportPoint]:
        return [SupportPoint(xi=self.xi[j].copy(), mass=float(self.mass[j])) for j in range(len(self))]

    def total_mass(self, selector: np.ndarray) -> float:
        """Mass of the support points flagged by boolean ``selector`` (summed in index order)."""
        return math.fsum(self.mass[selector].tolist())


def raw_multipliers(base: MultiplierBase, n: int, rng_seed: int | None = None) -> Support:
    """Unweighted multiplier support (before the leverage weights are applied)."""
    atoms, masses = base.atoms()
    if base.empirical:
        m = base.sample_size(n)
        rng = np.random.default_rng(rng_seed)
        pick = rng.random((m, n)) >= masses[0]
        xi = np.where(pick, atoms[1], atoms[0])
        return Support(xi=xi, mass=np.full(m, 1.0 / m))
    if n > ENUMERATION_CAP:
        raise EnumerationCapError(
            f"exact enumeration needs 2**{n} support points; use an empirical base for n > {ENUMERATION_CAP}"
        )
    pattern = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)
    xi = np.where(pattern == 1, atoms[1], atoms[0])
    mass_table = np.where(pattern == 1, masses[1], masses[0])
    # left-to-right product so every point's mass is a fixed, reproducible float
    mass = np.ones(len(pattern))
    for j in range(n):
        mass *= mass_table[:, j]
    return Support(xi=xi, mass=mass)


def multiplier_support(
    spec: BootstrapSchemeSpec,
    problem: TestingProblem,
    rng_seed: int | None = None,
    raw: Support | None = None,
) -> Support:
    """Support of Xi = diag(w) xi for the scheme's weights.

    Pass ``raw`` to reuse a fixed unweighted draw (for instance one empirical
    sample shared by every design in a search).
    """
    if raw is None:
        raw = raw_multipliers(spec.base, problem.n, rng_seed)
    w = bootstrap_weights(problem, spec.weight_hc, spec.weight_restricted)
    return Support(xi=raw.xi * w, mass=raw.mass)


# ---------------------------------------------------------------------------
# bootstrap samples
# ---------------------------------------------------------------------------


def _restricted_fitted(problem: TestingProblem, Y: np.ndarray) -> np.ndarray:
    return problem.mu0 + (Y - problem.mu0) @ problem.restricted_hat


def _resample_parts(problem: TestingProblem, spec: BootstrapSchemeSpec, Y: np.ndarray):
    """Centre and resampled residual for each row of ``Y``."""
    if spec.centering is Centering.RESTRICTED:
        centre = _restricted_fitted(problem, Y)
    else:
        centre = Y @ problem.hat
    if spec.residual_space is ResidualSpace.M0:
        resid = Y - _restricted_fitted(problem, Y)
    else:
        resid = Y @ problem.resid_maker
    return centre, resid


def bootstrap_sample(problem: TestingProblem, spec: BootstrapSchemeSpec, y: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """y*(y, xi) or y-dagger(y, xi), depending on the scheme's centering."""
    y = np.asarray(y, dtype=float)[None, :]
    centre, resid = _resample_parts(problem, spec, y)
    return centre[0] + np.asarray(xi, dtype=float) * resid[0]


def bootstrap_statistics(
    problem: TestingProblem,
    stat: StatisticSpec,
    spec: BootstrapSchemeSpec,
    Y: np.ndarray,
    Xi: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[np.ndarray, np.ndarray]:
    """Bootstrapped statistics for every (row of ``Y``, row of ``Xi``) pair.

    Returns ``(values, exceptional)`` of shape ``(N, S)``. Values are +inf
    wherever the bootstrap sample falls in the statistic's exceptional set.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    N, n = Y.shape
    S = Xi.shape[0]
    centre, resid = _resample_parts(problem, spec, Y)
    boot = centre[:, None, :] + Xi[None, :, :] * resid[:, None, :]
    boot = boot.reshape(N * S, n)
    if spec.centering is Centering.UNRESTRICTED:
        # numerator R beta_hat(y-dagger) - R beta_hat(y)
        shift = np.repeat(Y @ problem.L.T, S, axis=0)
        values, exc = evaluate_batch(problem, stat, boot, tol, center=shift)
    else:
        values, exc = evaluate_batch(problem, stat, boot, tol)
    values = np.where(exc, np.inf, values)
    return values.reshape(N, S), exc.reshape(N, S)


def bootstrapped_statistic(
    problem: TestingProblem,
    stat: StatisticSpec,
    spec: BootstrapSchemeSpec,
    y: np.ndarray,
    xi: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Single bootstrapped statistic; +inf on the exceptional set."""
    values, _ = bootstrap_statistics(problem, stat, spec, np.asarray(y)[None, :], np.asarray(xi)[None, :], tol)
    return float(values[0, 0])


def pvalues(
    problem: TestingProblem,
    stat: StatisticSpec,
    spec: BootstrapSchemeSpec,
    Y: np.ndarray,
    support: Support,
    tol: Tolerances = DEFAULT_TOLERANCES,
    chunk: int | None = None,
) -> np.ndarray:
    """Bootstrap p-values for every row of ``Y`` against a fixed weighted support.

    p(y) is the mass of bootstrap draws whose statistic is at least the
    observed one. The comparison allows a relative slack of
    ``tol.pvalue_tie_rtol`` so that exact ties are not decided by rounding.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    N = Y.shape[0]
    S = len(support)
    if chunk is None:
        chunk = max(1, 200_000 // max(S, 1))
    observed, _ = evaluate_batch(problem, stat, Y, tol)
    out = np.empty(N)
    for start in range(0, N, chunk):
        stop = min(N, start + chunk)
        boot, _ = bootstrap_statistics(problem, stat, spec, Y[start:stop], support.xi, tol)
        threshold = observed[start:stop] * (1.0 - tol.pvalue_tie_rtol)
        hits = boot >= threshold[:, None]
        for row in range(stop - start):
            out[start + row] = support.total_mass(hits[row])
    return out


def pvalue(
    problem: TestingProblem,
    stat: StatisticSpec,
    spec: BootstrapSchemeSpec,
    y: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
    rng_seed: int | None = None,
    support: Support | None = None,
) -> float:
    """Bootstrap p-value of ``y``; the induced test rejects iff p < alpha."""
    if support is None:
        support = multiplier_support(spec, problem, rng_seed)
    return float(pvalues(problem, stat, spec, np.asarray(y)[None, :], support, tol)[0])

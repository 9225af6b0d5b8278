"""Worst-case search over designs and heteroskedastic variance patterns.

Step 1 samples random designs per (k, q) scenario, keeps the one with the
smallest size-breakdown bound and estimates null rejection probabilities at
a few extreme variance patterns. Step 2 picks the overall minimiser, checks
that a small bound is backed by a large simulated rejection probability, and
when neither the bound nor the simulations show a problem, runs a second
search that tries hard to find a large null rejection probability.

All randomness is derived from one run seed through :func:`derive_seed`, so a
result depends only on (seed, procedure, scenario) and never on the order in
which scenarios or procedures are evaluated.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .bootstrap import BootstrapSchemeSpec, Support, multiplier_support, pvalues, raw_multipliers
from .diagnostics import ThetaReport, check_assumption, theta
from .errors import ScenarioInfeasible, SingularDesignError
from .linalg import DEFAULT_TOLERANCES, TestingProblem, Tolerances
from .statistics import StatisticSpec

VARIANCE_FLOOR = 1e-12
NM_INITIAL_STEP = 1.0


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from an arbitrary tuple of labels."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# designs and variance patterns
# ---------------------------------------------------------------------------


def random_design(n: int, k: int, rng_seed: int) -> np.ndarray:
    """Intercept column followed by k - 1 columns of i.i.d. log-normal entries."""
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got n={n}, k={k}")
    rng = np.random.default_rng(rng_seed)
    return np.hstack([np.ones((n, 1)), np.exp(rng.standard_normal((n, k - 1)))])


@dataclass(frozen=True)
class VarianceVector:
    """Diagonal error variances normalised to sum to one."""

    tau_sq: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau_sq, dtype=float).copy()
        if tau.ndim != 1 or tau.size == 0 or not np.all(tau > 0) or not np.all(np.isfinite(tau)):
            raise ValueError("variances must be a non-empty vector of positive finite numbers")
        if abs(math.fsum(tau.tolist()) - 1.0) > 1e-9:
            raise ValueError("variances must sum to one")
        tau.setflags(write=False)
        object.__setattr__(self, "tau_sq", tau)

    @classmethod
    def normalized(cls, v) -> "VarianceVector":
        """Rescale to unit sum, flooring tiny entries so every variance stays positive."""
        v = np.maximum(np.asarray(v, dtype=float), 0.0)
        v = v / v.sum()
        v = np.maximum(v, VARIANCE_FLOOR)
        return cls(v / v.sum())


def extreme_variance(n: int, rho: float, i_star: int) -> VarianceVector:
    """Variance rho at position ``i_star`` and (1 - rho)/(n - 1) everywhere else."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if not 0 <= i_star < n:
        raise ValueError("i_star out of range")
    if rho == 1.0 / n:
        # homoskedastic case: every entry is the same double
        return VarianceVector(np.full(n, rho))
    tau = np.full(n, (1.0 - rho) / (n - 1))
    tau[i_star] = rho
    return VarianceVector(tau)


# ---------------------------------------------------------------------------
# Monte Carlo null rejection probabilities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RejectionEstimate:
    alpha: float
    variance: VarianceVector
    reps: int
    rejections: int
    seed: int

    @property
    def estimate(self) -> float:
        return self.rejections / self.reps

    @property
    def std_error(self) -> float:
        p = self.estimate
        return math.sqrt(max(p * (1 - p), 1e-12) / self.reps)


def null_draws(problem: TestingProblem, variance: VarianceVector, reps: int, rng_seed: int) -> np.ndarray:
    """``reps`` samples y = mu0 + diag(tau) Z with Z standard normal.

    Replication j uses its own generator seeded by (rng_seed, j), so any
    subset of replications can be reproduced independently.
    """
    Z = np.empty((reps, problem.n))
    for j in range(reps):
        Z[j] = np.random.default_rng([rng_seed, j]).standard_normal(problem.n)
    return problem.mu0 + Z * np.sqrt(variance.tau_sq)


def mc_pvalues(
    problem: TestingProblem,
    stat: StatisticSpec,
    scheme: BootstrapSchemeSpec,
    variance: VarianceVector,
    reps: int,
    rng_seed: int,
    support: Support | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    if reps < 1:
        raise ValueError("reps must be positive")
    if support is None:
        support = multiplier_support(scheme, problem, derive_seed(rng_seed, "multipliers"))
    return pvalues(problem, stat, scheme, null_draws(problem, variance, reps, rng_seed), support, tol)


def mc_rejection_prob(
    problem: TestingProblem,
    stat: StatisticSpec,
    scheme: BootstrapSchemeSpec,
    alpha: float,
    variance: VarianceVector,
    reps: int,
    rng_seed: int,
    support: Support | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> RejectionEstimate:
    """Simulated probability that the bootstrap test rejects under the null."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    p = mc_pvalues(problem, stat, scheme, variance, reps, rng_seed, support, tol)
    return RejectionEstimate(alpha, variance, reps, int(np.sum(p < alpha)), rng_seed)


# ---------------------------------------------------------------------------
# parameters and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchParams:
    max_designs: int = 150
    early_stop: float = 0.01
    reps: int = 300
    alphas: tuple[float, ...] = (0.05, 0.1)
    rhos: tuple[float, ...] | None = None  # None: (1/n, 0.9, 0.99, 0.999, 0.9999)
    reliability_floor: float = 0.4
    fail_factor: float = 3.0
    scan_stop_factor: float = 4.0
    second_max_designs: int = 150
    scan_designs: int = 30
    scan_shifts: tuple[float, ...] = (0.0, 0.1, 0.5)
    scan_rho: float = 0.99
    nm_iterations: int = 20
    tol: Tolerances = DEFAULT_TOLERANCES

    def rho_grid(self, n: int) -> tuple[float, ...]:
        return self.rhos if self.rhos is not None else (1.0 / n, 0.9, 0.99, 0.999, 0.9999)


@dataclass
class Step1Result:
    n: int
    k: int
    q: int
    best_design: np.ndarray
    theta_min: float
    report: ThetaReport
    pi_table: dict[float, dict[float, RejectionEstimate]]
    designs_tried: int
    designs_rejected: int

    @property
    def scenario(self) -> tuple[int, int]:
        return (self.k, self.q)

    def max_pi(self, alpha: float) -> float:
        return max(est.estimate for est in self.pi_table[alpha].values())


class Phase(enum.Enum):
    STEP1_DONE = "Step1Done"
    RELIABILITY_FAILED_AND_REPLACED = "ReliabilityFailedAndReplaced"
    STEP2_SECOND_SEARCH = "Step2SecondSearch"


@dataclass
class SearchReport:
    alpha: float
    scenario: tuple[int, int]
    best_design: np.ndarray
    theta_min: float
    pi_table: dict[float, RejectionEstimate]
    phase: Phase
    fails: bool
    reported_rejection: float
    reported_theta: float
    replacements: int = 0
    theta_reliable: bool = True
    final_rejection: RejectionEstimate | None = None
    final_theta: float | None = None
    final_design: np.ndarray | None = None
    worst_variance: VarianceVector | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def second_search(self) -> bool:
        return self.phase is Phase.STEP2_SECOND_SEARCH


# ---------------------------------------------------------------------------
# Step 1
# ---------------------------------------------------------------------------


def _scheme_raw(scheme: BootstrapSchemeSpec, n: int, seed: int) -> Support:
    return raw_multipliers(scheme.base, n, seed if scheme.base.empirical else None)


def _admissible_problem(X: np.ndarray, q: int, stat: StatisticSpec, tol: Tolerances) -> TestingProblem | None:
    try:
        problem = TestingProblem.last_q(X, q)
    except SingularDesignError:
        return None
    if not check_assumption(problem, stat, tol):
        return None
    return problem


def step1_search(
    n: int,
    k: int,
    q: int,
    stat: StatisticSpec,
    scheme: BootstrapSchemeSpec,
    params: SearchParams = SearchParams(),
    rng_seed: int = 0,
) -> Step1Result:
    """Search random designs for a small bound, then simulate at extreme variances.

    Designs that fail the rank or the statistic's rank assumption still count
    against ``params.max_designs``.
    """
    if not (1 <= q <= k < n):
        raise ValueError(f"invalid scenario n={n}, k={k}, q={q}")
    tol = params.tol
    raw = _scheme_raw(scheme, n, derive_seed(rng_seed, "multipliers", k, q))
    best = None
    rejected = 0
    tried = 0
    for d in range(params.max_designs):
        tried += 1
        X = random_design(n, k, derive_seed(rng_seed, "design", k, q, d))
        problem = _admissible_problem(X, q, stat, tol)
        if problem is None:
            rejected += 1
            continue
        support = multiplier_support(scheme, problem, raw=raw)
        report = theta(problem, stat, scheme, tol, support=support)
        if best is None or report.value < best[1].value:
            best = (problem, report, support)
        if report.value < params.early_stop:
            break
    if best is None:
        raise ScenarioInfeasible(f"no admissible design among {tried} draws for k={k}, q={q}")
    problem, report, support = best

    pi_table: dict[float, dict[float, RejectionEstimate]] = {a: {} for a in params.alphas}
    mc_seed = derive_seed(rng_seed, "pi", k, q)
    for rho in params.rho_grid(n):
        variance = extreme_variance(n, rho, report.i_star)
        p = mc_pvalues(problem, stat, scheme, variance, params.reps, mc_seed, support, tol)
        for a in params.alphas:
            pi_table[a][rho] = RejectionEstimate(a, variance, params.reps, int(np.sum(p < a)), mc_seed)
    return Step1Result(n, k, q, problem.X.copy(), report.value, report, pi_table, tried, rejected)


def default_scenarios(max_k: int = 5) -> list[tuple[int, int]]:
    return [(k, q) for k in range(2, max_k + 1) for q in range(1, k)]


# ---------------------------------------------------------------------------
# Nelder-Mead over the variance simplex
# ---------------------------------------------------------------------------


def _to_logratio(v: VarianceVector) -> np.ndarray:
    t = v.tau_sq
    return np.log(t[:-1]) - np.log(t[-1])


def _from_logratio(z: np.ndarray) -> VarianceVector:
    full = np.append(z, 0.0)
    full = np.exp(full - full.max())
    return VarianceVector.normalized(full)


def nelder_mead_max(objective, start: VarianceVector, max_iter: int = 20) -> tuple[VarianceVector, float]:
    """Maximise ``objective`` over normalised variance vectors.

    Runs scipy's Nelder-Mead (reflection 1, expansion 2, contraction and
    shrink 0.5) in log-ratio coordinates, so every candidate is a valid
    variance vector. Returns the best point evaluated, never worse than
    ``start``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    best_v = start
    best_val = float(objective(start))

    def negated(z):
        nonlocal best_v, best_val
        v = _from_logratio(z)
        val = float(objective(v))
        if val > best_val:
            best_v, best_val = v, val
        return -val

    if start.tau_sq.size > 1:
        z0 = _to_logratio(start)
        # unit steps in log-ratio space move a variance by a factor e, a useful initial scale
        simplex = np.vstack([z0, z0 + NM_INITIAL_STEP * np.eye(z0.size)])
        optimize.minimize(
            negated,
            z0,
            method="Nelder-Mead",
            options={
                "maxiter": max_iter,
                "xatol": 0.0,
                "fatol": 0.0,
                "adaptive": False,
                "initial_simplex": simplex,
            },
        )
    return best_v, best_val


# ---------------------------------------------------------------------------
# Step 2
# ---------------------------------------------------------------------------


def _reliability_ok(res: Step1Result, params: SearchParams) -> bool:
    return not any(res.theta_min < a and res.max_pi(a) < params.reliability_floor for a in params.alphas)


def step2_procedure(
    step1: list[Step1Result],
    stat: StatisticSpec,
    scheme: BootstrapSchemeSpec,
    alpha: float,
    params: SearchParams = SearchParams(),
    rng_seed: int = 0,
) -> SearchReport:
    """Classify one procedure at level ``alpha`` from its Step-1 results."""
    if not step1:
        raise ValueError("step2_procedure needs at least one Step-1 result")
    tol = params.tol
    order = sorted(step1, key=lambda r: r.theta_min)
    chosen = None
    replacements = 0
    for res in order:
        if _reliability_ok(res, params):
            chosen = res
            break
        replacements += 1
    notes = []
    theta_reliable = chosen is not None
    if chosen is None:
        # every small bound looked unreliable: classify from the simulations alone
        chosen = order[0]
        notes.append("no Step-1 bound passed the reliability check; classification uses rejection probabilities only")
    max_pi = chosen.max_pi(alpha)
    phase = Phase.RELIABILITY_FAILED_AND_REPLACED if replacements else Phase.STEP1_DONE
    common = dict(
        alpha=alpha,
        scenario=chosen.scenario,
        best_design=chosen.best_design,
        theta_min=chosen.theta_min,
        pi_table=chosen.pi_table[alpha],
        replacements=replacements,
        theta_reliable=theta_reliable,
        notes=notes,
    )
    if (theta_reliable and chosen.theta_min < alpha) or max_pi >= params.fail_factor * alpha:
        return SearchReport(
            phase=phase, fails=True, reported_rejection=max_pi, reported_theta=chosen.theta_min, **common
        )

    n, k, q = chosen.n, chosen.k, chosen.q
    base_seed = derive_seed(rng_seed, "second", k, q, alpha)

    def design_context(X, tag):
        problem = _admissible_problem(X, q, stat, tol)
        if problem is None:
            return None
        raw = _scheme_raw(scheme, n, derive_seed(base_seed, "multipliers", tag))
        return problem, multiplier_support(scheme, problem, raw=raw)

    # second design search, looking for a bound below alpha
    best_ctx, best_theta = None, math.inf
    for d in range(params.second_max_designs):
        ctx = design_context(random_design(n, k, derive_seed(base_seed, "design", d)), ("search", d))
        if ctx is None:
            continue
        value = theta(ctx[0], stat, scheme, tol, support=ctx[1]).value
        if value < best_theta:
            best_ctx, best_theta = ctx, value
        if value < alpha:
            break
    candidates = [] if best_ctx is None else [best_ctx]
    extra = 0
    while len(candidates) < params.scan_designs and extra < 10 * params.scan_designs:
        ctx = design_context(random_design(n, k, derive_seed(base_seed, "scan-design", extra)), ("scan", extra))
        extra += 1
        if ctx is not None:
            candidates.append(ctx)

    # scan variance patterns over the candidate designs
    stop_level = params.scan_stop_factor * alpha
    top = None  # (probability, ctx, variance, design index)
    for c, ctx in enumerate(candidates):
        problem, support = ctx
        for i in range(n):
            for s in params.scan_shifts:
                g = np.random.default_rng(derive_seed(base_seed, "G", c, i, s)).standard_normal(n)
                variance = VarianceVector.normalized(
                    extreme_variance(n, params.scan_rho, i).tau_sq + s * np.abs(g)
                )
                est = mc_rejection_prob(
                    problem, stat, scheme, alpha, variance, params.reps,
                    derive_seed(base_seed, "scan-mc", c, i, s), support, tol,
                )
                if top is None or est.estimate > top[0]:
                    top = (est.estimate, ctx, variance, c)
        if top is not None and top[0] > stop_level:
            break
    if top is None:
        raise ScenarioInfeasible(f"no admissible design in the second search for k={k}, q={q}")

    prob, (problem, support), variance, _ = top
    if prob <= stop_level:
        nm_seed = derive_seed(base_seed, "nm")

        def objective(v):
            return mc_rejection_prob(problem, stat, scheme, alpha, v, params.reps, nm_seed, support, tol).estimate

        variance, _ = nelder_mead_max(objective, variance, params.nm_iterations)
    final = mc_rejection_prob(
        problem, stat, scheme, alpha, variance, params.reps, derive_seed(base_seed, "final"), support, tol
    )
    final_theta = theta(problem, stat, scheme, tol, support=support).value
    return SearchReport(
        phase=Phase.STEP2_SECOND_SEARCH,
        fails=final.estimate >= params.fail_factor * alpha,
        reported_rejection=final.estimate,
        reported_theta=final_theta,
        final_rejection=final,
        final_theta=final_theta,
        final_design=problem.X.copy(),
        worst_variance=variance,
        **common,
    )


def run_procedure(
    n: int,
    stat: StatisticSpec,
    scheme: BootstrapSchemeSpec,
    params: SearchParams = SearchParams(),
    rng_seed: int = 0,
    scenarios: list[tuple[int, int]] | None = None,
) -> tuple[list[Step1Result], dict[float, SearchReport]]:
    """Step 1 over all scenarios, then Step 2 at each level in ``params.alphas``."""
    scenarios = default_scenarios() if scenarios is None else scenarios
    step1 = []
    for k, q in scenarios:
        if k >= n:
            continue
        try:
            step1.append(step1_search(n, k, q, stat, scheme, params, rng_seed))
        except ScenarioInfeasible:
            continue
    if not step1:
        raise ScenarioInfeasible("no scenario produced an admissible design")
    reports = {a: step2_procedure(step1, stat, scheme, a, params, rng_seed) for a in params.alphas}
    return step1, reports

"""Seven-field procedure codes and run configuration.

A code ``x1:x2:x3:x4:x5:x6:x7`` names one bootstrap test procedure:

=====  ==========================================================
x1     covariance estimator: -1 uncorrected, 0-4 for HC0-HC4
x2     T/F: statistic built from null-restricted residuals
x3     r/m: Rademacher or Mammen multipliers
x4     0-4: HC family of the bootstrap weights
x5     T/F: weights use restricted leverages
x6     T/F: residual space is the null space M0 (F: span(X))
x7     T/F: bootstrap samples centred at the restricted fit (F: OLS fit)
=====  ==========================================================
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from .bootstrap import BaseKind, BootstrapSchemeSpec, Centering, MultiplierBase, ResidualSpace
from .errors import CodeParseError
from .statistics import HcKind, StatisticSpec

FIELD_NAMES = ("x1", "x2", "x3", "x4", "x5", "x6", "x7")
SETTINGS = {"A": 10, "B": 20, "C": 30}
EXACT_MAX_N = 10


def _flag(field: str, token: str) -> bool:
    if token == "T":
        return True
    if token == "F":
        return False
    raise CodeParseError(field, token, "expected T or F")


def _int_in(field: str, token: str, lo: int, hi: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise CodeParseError(field, token, "expected an integer") from None
    if str(value) != token or not lo <= value <= hi:
        raise CodeParseError(field, token, f"expected an integer in {lo}..{hi}")
    return value


@dataclass(frozen=True, order=True)
class ProcedureCode:
    x1: int
    x2: bool
    x3: str
    x4: int
    x5: bool
    x6: bool
    x7: bool

    def format(self) -> str:
        tf = lambda b: "T" if b else "F"  # noqa: E731
        return ":".join([str(self.x1), tf(self.x2), self.x3, str(self.x4), tf(self.x5), tf(self.x6), tf(self.x7)])

    __str__ = format

    def statistic(self) -> StatisticSpec:
        return StatisticSpec(HcKind(self.x1), self.x2)

    def scheme(self, n: int, empirical: bool | None = None, m: int | None = None) -> BootstrapSchemeSpec:
        """Bootstrap scheme at sample size ``n``.

        By default the multipliers are fully enumerated for n <= 10 and replaced
        by a stored sample of size 10 n - 1 otherwise.
        """
        if empirical is None:
            empirical = n > EXACT_MAX_N
        if self.x3 == "r":
            kind = BaseKind.EMPIRICAL_RADEMACHER if empirical else BaseKind.RADEMACHER
        else:
            kind = BaseKind.EMPIRICAL_MAMMEN if empirical else BaseKind.MAMMEN
        return BootstrapSchemeSpec(
            base=MultiplierBase(kind, m if empirical else None),
            weight_hc=HcKind(self.x4),
            weight_restricted=self.x5,
            residual_space=ResidualSpace.M0 if self.x6 else ResidualSpace.SPAN_X,
            centering=Centering.RESTRICTED if self.x7 else Centering.UNRESTRICTED,
        )


def parse_code(s: str) -> ProcedureCode:
    """Strict parser; errors name the offending field."""
    if not isinstance(s, str):
        raise CodeParseError("code", repr(s), "expected a string")
    parts = s.strip().split(":")
    if len(parts) != 7:
        raise CodeParseError("code", s, "expected 7 colon-separated fields")
    x3 = parts[2]
    if x3 not in ("r", "m"):
        raise CodeParseError("x3", x3, "expected r or m")
    return ProcedureCode(
        x1=_int_in("x1", parts[0], -1, 4),
        x2=_flag("x2", parts[1]),
        x3=x3,
        x4=_int_in("x4", parts[3], 0, 4),
        x5=_flag("x5", parts[4]),
        x6=_flag("x6", parts[5]),
        x7=_flag("x7", parts[6]),
    )


def equivalent_codes(c: ProcedureCode) -> frozenset[ProcedureCode]:
    """Codes that define the same test as ``c``.

    With unrestricted residuals in the statistic the centering is immaterial,
    and HC0 weights do not depend on the leverage family.
    """
    x7s = (True, False) if not c.x2 else (c.x7,)
    x5s = (True, False) if c.x4 == 0 else (c.x5,)
    return frozenset(replace(c, x5=a, x7=b) for a in x5s for b in x7s)


def canonical(c: ProcedureCode) -> ProcedureCode:
    """Smallest member of the equivalence class under the dataclass ordering."""
    return min(equivalent_codes(c))


def all_codes() -> list[ProcedureCode]:
    """Every syntactically valid code (960 of them)."""
    return [
        ProcedureCode(x1, x2, x3, x4, x5, x6, x7)
        for x1, x2, x3, x4, x5, x6, x7 in itertools.product(
            range(-1, 5), (True, False), ("r", "m"), range(5), (True, False), (True, False), (True, False)
        )
    ]


def distinct_procedures() -> list[ProcedureCode]:
    """One canonical representative per equivalence class (648 distinct tests)."""
    return sorted({canonical(c) for c in all_codes()})


@dataclass(frozen=True)
class RunConfig:
    """Inputs of a study run."""

    n: int = 10
    alphas: tuple[float, ...] = (0.05, 0.1)
    seed: int = 0
    reps: int = 300
    max_designs: int = 150
    scenarios: tuple[tuple[int, int], ...] = tuple((k, q) for k in range(2, 6) for q in range(1, k))
    empirical: bool | None = None
    workers: int = 1

    @classmethod
    def for_setting(cls, setting: str, **kw) -> "RunConfig":
        try:
            n = SETTINGS[setting.upper()]
        except KeyError:
            raise ValueError(f"unknown setting {setting!r}; expected one of A, B, C") from None
        return cls(n=n, **kw)

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if not all(0 < a < 1 for a in self.alphas):
            raise ValueError("alphas must lie in (0, 1)")
        if self.reps < 1 or self.max_designs < 1 or self.workers < 1:
            raise ValueError("reps, max_designs and workers must be positive")
        if self.empirical is False and self.n > 14:
            raise ValueError("exact enumeration is limited to n <= 14")

"""Command-line interface.

Subcommands::

    wildsize theta   --code C --x X.csv (--last-q Q | --R R.csv --r r.csv)
    wildsize pvalue  --code C --x X.csv --y y.csv (...)
    wildsize reject  --code C --x X.csv --variance tau.csv --alpha A (...)
    wildsize study   --setting A --codes C1 C2 ... --out results

Every subcommand writes JSON lines (to ``--out`` or stdout). Each record has
a ``schema`` field. ``study`` also writes ``<out>.csv`` with one scatter
point (bound versus rejection probability) per procedure and level, and
``<out>.survivors.csv`` with the procedures that pass the worst-case check.

Exit status: 0 on success, 2 when a rank assumption fails, 1 for input or
parse errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bootstrap import multiplier_support, pvalue
from .codes import SETTINGS, ProcedureCode, RunConfig, all_codes, parse_code
from .diagnostics import theta, theta_minus_alpha_verdict
from .errors import AssumptionViolation, WildSizeError
from .linalg import DEFAULT_TOLERANCES, TestingProblem, Tolerances
from .search import SearchParams, VarianceVector, derive_seed, mc_rejection_prob, run_procedure
from .statistics import statistic

SCHEMA = "wildsize.report/1"
log = logging.getLogger("wildsize")

SCATTER_FIELDS = (
    "code", "n", "alpha", "theta", "rejection", "dot", "phase", "fails", "k", "q", "theta_reliable",
)


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------


def read_matrix(path: str) -> np.ndarray:
    """Headerless CSV of decimal floats."""
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if data.size == 0:
        raise ValueError(f"{path} is empty")
    return data


def read_vector(path: str) -> np.ndarray:
    return read_matrix(path).ravel()


def build_problem(args) -> TestingProblem:
    X = read_matrix(args.x)
    if args.last_q is not None:
        if args.R is not None or args.r is not None:
            raise ValueError("--last-q cannot be combined with --R/--r")
        return TestingProblem.last_q(X, args.last_q)
    if args.R is None:
        raise ValueError("give either --last-q or --R (with optional --r)")
    R = read_matrix(args.R)
    r = read_vector(args.r) if args.r is not None else np.zeros(R.shape[0])
    return TestingProblem(X, R, r)


def tolerances(args) -> Tolerances:
    tol = DEFAULT_TOLERANCES
    if getattr(args, "tol_invert", None) is not None:
        tol = replace(tol, invertibility_tol=args.tol_invert)
    if getattr(args, "tol_ineq", None) is not None:
        tol = replace(tol, strict_ineq_tol=args.tol_ineq)
    return tol


def emit(records, out: str | None) -> None:
    lines = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in records)
    if out is None or out == "-":
        sys.stdout.write(lines)
    else:
        Path(out).write_text(lines)


def _base(command: str, code: ProcedureCode, problem: TestingProblem) -> dict:
    return {"schema": SCHEMA, "command": command, "code": code.format(), "n": problem.n, "k": problem.k, "q": problem.q}


# ---------------------------------------------------------------------------
# single-design commands
# ---------------------------------------------------------------------------


def cmd_theta(args) -> int:
    code = parse_code(args.code)
    problem = build_problem(args)
    tol = tolerances(args)
    scheme = code.scheme(problem.n)
    report = theta(problem, code.statistic(), scheme, tol, index_set=args.index_set, rng_seed=args.seed)
    rec = _base("theta", code, problem)
    rec.update(
        value=report.value,
        kind=report.kind.value,
        special_case_applied=report.special_case_applied,
        assumption_ok=report.assumption_ok,
        i_star=report.i_star,
        index_set=None if report.index_set is None else list(report.index_set),
        per_index=[
            {"index": e.index, "contribution": e.contribution, "branch": e.branch.value, "reason": e.reason}
            for e in report.per_index
        ],
        verdicts={str(a): theta_minus_alpha_verdict(report, a).value for a in args.alpha},
        notes=list(report.notes),
    )
    emit([rec], args.out)
    return 0


def cmd_pvalue(args) -> int:
    code = parse_code(args.code)
    problem = build_problem(args)
    tol = tolerances(args)
    y = read_vector(args.y)
    if y.shape != (problem.n,):
        raise ValueError(f"y has {y.size} entries but X has {problem.n} rows")
    stat = code.statistic()
    scheme = code.scheme(problem.n)
    p = pvalue(problem, stat, scheme, y, tol, rng_seed=args.seed)
    value = statistic(problem, stat, y, tol)
    rec = _base("pvalue", code, problem)
    rec.update(
        statistic=value.value,
        exceptional=value.exceptional,
        pvalue=p,
        rejects={str(a): bool(p < a) for a in args.alpha},
    )
    emit([rec], args.out)
    return 0


def cmd_reject(args) -> int:
    code = parse_code(args.code)
    problem = build_problem(args)
    tol = tolerances(args)
    variance = VarianceVector.normalized(read_vector(args.variance))
    if variance.tau_sq.size != problem.n:
        raise ValueError("variance vector length must equal the number of rows of X")
    stat = code.statistic()
    scheme = code.scheme(problem.n)
    support = multiplier_support(scheme, problem, derive_seed(args.seed, "multipliers"))
    rec = _base("reject", code, problem)
    rec.update(seed=args.seed, reps=args.reps, rejection={})
    for a in args.alpha:
        est = mc_rejection_prob(problem, stat, scheme, a, variance, args.reps, args.seed, support, tol)
        rec["rejection"][str(a)] = {"estimate": est.estimate, "rejections": est.rejections, "std_error": est.std_error}
    emit([rec], args.out)
    return 0


# ---------------------------------------------------------------------------
# study
# ---------------------------------------------------------------------------


def study_one(code_str: str, config: RunConfig, tol: Tolerances = DEFAULT_TOLERANCES) -> list[dict]:
    """Run the two-step search for one procedure; return its report records."""
    code = parse_code(code_str)
    params = SearchParams(max_designs=config.max_designs, reps=config.reps, alphas=config.alphas, tol=tol)
    seed = derive_seed(config.seed, config.n, code.format())
    stat = code.statistic()
    scheme = code.scheme(config.n, config.empirical)
    step1, reports = run_procedure(config.n, stat, scheme, params, seed, list(config.scenarios))
    records = []
    for res in step1:
        records.append(
            {
                "schema": SCHEMA,
                "type": "step1",
                "code": code.format(),
                "n": config.n,
                "k": res.k,
                "q": res.q,
                "theta_min": res.theta_min,
                "i_star": res.report.i_star,
                "designs_tried": res.designs_tried,
                "designs_rejected": res.designs_rejected,
                "pi": {
                    str(a): {repr(rho): est.estimate for rho, est in table.items()} for a, table in res.pi_table.items()
                },
                "design": res.best_design.tolist(),
            }
        )
    for a, rep in reports.items():
        records.append(
            {
                "schema": SCHEMA,
                "type": "classification",
                "code": code.format(),
                "n": config.n,
                "alpha": a,
                "k": rep.scenario[0],
                "q": rep.scenario[1],
                "phase": rep.phase.value,
                "fails": rep.fails,
                "theta_min": rep.theta_min,
                "theta_reliable": rep.theta_reliable,
                "replacements": rep.replacements,
                "max_pi": max(e.estimate for e in rep.pi_table.values()),
                "reported_theta": rep.reported_theta,
                "reported_rejection": rep.reported_rejection,
                "dot": "red" if rep.second_search else "black",
                "final_theta": rep.final_theta,
                "final_rejection": None if rep.final_rejection is None else rep.final_rejection.estimate,
                "worst_variance": None if rep.worst_variance is None else rep.worst_variance.tau_sq.tolist(),
                "notes": rep.notes,
            }
        )
    return records


def _study_task(payload):
    code_str, config, tol = payload
    return study_one(code_str, config, tol)


def run_study(codes: list[str], config: RunConfig, tol: Tolerances = DEFAULT_TOLERANCES) -> list[dict]:
    """Study several procedures; record order is sorted by code and does not depend on ``workers``."""
    codes = sorted({parse_code(c).format() for c in codes})
    tasks = [(c, config, tol) for c in codes]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_study_task, tasks))
    else:
        chunks = []
        for c, task in zip(codes, tasks):
            log.info("studying %s", c)
            chunks.append(_study_task(task))
    return [rec for chunk in chunks for rec in chunk]


def scatter_rows(records: list[dict]) -> list[dict]:
    rows = []
    for rec in records:
        if rec.get("type") != "classification":
            continue
        rows.append(
            {
                "code": rec["code"],
                "n": rec["n"],
                "alpha": rec["alpha"],
                "theta": rec["reported_theta"],
                "rejection": rec["reported_rejection"],
                "dot": rec["dot"],
                "phase": rec["phase"],
                "fails": rec["fails"],
                "k": rec["k"],
                "q": rec["q"],
                "theta_reliable": rec["theta_reliable"],
            }
        )
    return rows


def survivors(records: list[dict]) -> list[dict]:
    return [
        {"code": r["code"], "n": r["n"], "alpha": r["alpha"], "rejection": r["reported_rejection"], "theta": r["reported_theta"]}
        for r in records
        if r.get("type") == "classification" and not r["fails"]
    ]


def _write_csv(path: Path, fields, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields))
        writer.writeheader()
        writer.writerows(rows)


def random_code_subset(count: int, seed: int) -> list[str]:
    """Seeded sample of ``count`` codes drawn without replacement from all 960."""
    pool = all_codes()
    rng = np.random.default_rng(derive_seed(seed, "code-subset"))
    picks = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
    return [pool[i].format() for i in sorted(picks)]


def select_codes(args) -> list[str]:
    codes = list(args.codes or [])
    if args.codes_file:
        codes += [line.strip() for line in Path(args.codes_file).read_text().splitlines() if line.strip()]
    if args.random_codes:
        codes += random_code_subset(args.random_codes, args.seed)
    if not codes:
        raise ValueError("no procedure codes given (use --codes, --codes-file or --random-codes)")
    for c in codes:
        parse_code(c)
    return codes


def cmd_study(args) -> int:
    codes = select_codes(args)
    n = args.n if args.n is not None else SETTINGS[args.setting.upper()]
    config = RunConfig(
        n=n,
        alphas=tuple(args.alpha),
        seed=args.seed,
        reps=args.reps,
        max_designs=args.max_designs,
        workers=args.workers,
    )
    records = run_study(codes, config, tolerances(args))
    out = args.out
    emit(records, None if out is None else f"{out}.jsonl")
    if out is not None:
        _write_csv(Path(f"{out}.csv"), SCATTER_FIELDS, scatter_rows(records))
        _write_csv(Path(f"{out}.survivors.csv"), ("code", "n", "alpha", "rejection", "theta"), survivors(records))
    summary = {}
    for row in scatter_rows(records):
        s = summary.setdefault(row["alpha"], [0, 0])
        s[0] += row["fails"]
        s[1] += 1
    for a, (fails, total) in sorted(summary.items()):
        log.info("alpha=%s: %d of %d procedures fail the worst-case check", a, fails, total)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--code", required=True, help="procedure code x1:x2:x3:x4:x5:x6:x7")
    p.add_argument("--x", required=True, help="design matrix, headerless CSV")
    p.add_argument("--R", help="restriction matrix R, headerless CSV")
    p.add_argument("--r", help="restriction vector r, headerless CSV (default 0)")
    p.add_argument("--last-q", type=int, help="test that the last q coefficients are zero")


def _add_common(
    p: argparse.ArgumentParser,
    alpha_default=(0.05, 0.1),
    out_help="output path (JSON lines); stdout when omitted",
) -> None:
    p.add_argument("--alpha", type=float, nargs="+", default=list(alpha_default))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=out_help)
    p.add_argument("--tol-invert", type=float, help="invertibility tolerance")
    p.add_argument("--tol-ineq", type=float, help="strict-inequality tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wildsize", description="Size diagnostics for wild-bootstrap tests")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theta", help="size-breakdown bound for one design")
    _add_problem_args(p)
    _add_common(p)
    p.add_argument("--index-set", type=int, nargs="*", help="restrict to these 0-based indices")
    p.set_defaults(func=cmd_theta)

    p = sub.add_parser("pvalue", help="bootstrap p-value of an observation")
    _add_problem_args(p)
    _add_common(p)
    p.add_argument("--y", required=True, help="observation vector, CSV")
    p.set_defaults(func=cmd_pvalue)

    p = sub.add_parser("reject", help="Monte Carlo null rejection probability")
    _add_problem_args(p)
    _add_common(p)
    p.add_argument("--variance", required=True, help="error variances, CSV (rescaled to sum to one)")
    p.add_argument("--reps", type=int, default=300)
    p.set_defaults(func=cmd_reject)

    p = sub.add_parser("study", help="two-step worst-case search over procedures")
    _add_common(p, out_help="prefix for PREFIX.jsonl, PREFIX.csv and PREFIX.survivors.csv; JSON lines on stdout when omitted")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--setting", choices=sorted(SETTINGS), default="A")
    group.add_argument("--n", type=int)
    p.add_argument("--codes", nargs="*")
    p.add_argument("--codes-file")
    p.add_argument("--random-codes", type=int, help="add a seeded random subset of this many codes")
    p.add_argument("--reps", type=int, default=300)
    p.add_argument("--max-designs", type=int, default=150)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except AssumptionViolation as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, WildSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 failed assertion or audit,
3 resource cap exceeded. Problems with input files are printed to stderr
as one JSON object per line with ``file``, ``line``, ``column`` and
``message`` keys.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import io
from .adversary import (
    DEFAULT_CAP,
    EnumerationCapExceeded,
    brute_force_best_adversary,
    cbs_scan_best_adversary,
    cbs_spec,
)
from .engine import exact_age
from .equilibrium import (
    NASH_REJECTED,
    Deviation,
    DynamicsTrace,
    best_response_dynamics,
    nash_no_diversity,
    stackelberg_point,
    verify_nash_diversity,
)
from .model import BlockingMatrix, Diversity, GeneralK, NoDiversity, ValidationError
from .policies import (
    InfeasiblePolicyError,
    numeric_best_policy,
    optimal_policy_general_k,
    optimal_policy_vs_cbs,
    uniform_policy,
)
from .simulation import run_bound_grid, simulate

EXIT_OK, EXIT_INVALID, EXIT_AUDIT, EXIT_CAP = 0, 1, 2, 3


class AuditFailure(Exception):
    pass


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, metavar="PATH", help="game configuration JSON")
    p.add_argument("--policy", metavar="PATH", help="base-station policy JSON (default: uniform)")
    p.add_argument("--blocking", metavar="PATH", help="blocking matrix JSON (default: none)")
    p.add_argument("--out", metavar="DIR", help="directory for CSV/JSON results")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument(
        "--threads", type=int, default=None, metavar="K", help="worker cap (default: all cores)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agegame",
        description="Age-of-information scheduling against a jamming adversary.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("exact-age", help="exact expected ages for a policy and blocking")
    _add_common(p)

    p = sub.add_parser("adversary", help="best blocking against a policy")
    _add_common(p)
    p.add_argument(
        "--mode", choices=["brute", "cbs-scan"], default="cbs-scan", help="search method (default: cbs-scan)"
    )
    p.add_argument(
        "--cap", type=int, default=DEFAULT_CAP, help=f"brute-force matrix limit (default: {DEFAULT_CAP})"
    )

    p = sub.add_parser("policy", help="best base-station policy against a blocking")
    _add_common(p)
    p.add_argument(
        "--mode",
        choices=["closed-form", "numeric"],
        default="closed-form",
        help="closed form or numerical optimizer (default: closed-form)",
    )
    p.add_argument(
        "--target", type=int, default=1, help="jammed user for the closed form (default: 1)"
    )
    p.add_argument("--tolerance", type=float, default=1e-10, help="numeric stopping tolerance")

    p = sub.add_parser("equilibrium", help="equilibrium search and verification")
    _add_common(p)
    p.add_argument(
        "--mode",
        choices=["nash", "stackelberg", "dynamics"],
        default="nash",
        help="analysis to run (default: nash)",
    )
    p.add_argument("--rounds", type=int, default=20, help="best-response round limit")
    p.add_argument("--deviations", type=int, default=200, help="audited deviations per side")

    p = sub.add_parser("simulate", help="Monte Carlo ages with a standard error")
    _add_common(p)
    p.add_argument("--reps", type=int, default=10_000, help="replications (default: 10000)")

    p = sub.add_parser("bounds", help="check the age bounds on the instance grid")
    _add_common(p, config_required=False)
    p.add_argument("--full", action="store_true", help="run the whole acceptance grid")
    return parser


# --------------------------------------------------------------------------


def _load_inputs(args):
    config = io.read_config(args.config)
    policy = io.read_policy(args.policy, config) if args.policy else uniform_policy(config)
    if args.blocking:
        sigma = io.read_blocking(args.blocking, config)
    else:
        sigma = BlockingMatrix.empty(config.n_targets, config.horizon)
    return config, policy, sigma


def _emit(args, summary: dict, files: dict) -> None:
    """Write ``files`` (name -> writer) into ``--out`` and print the summary."""
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, write in files.items():
            write(out / name)
        io.write_json(summary, out / "summary.json")
    print(io.dumps(summary))


def _cmd_exact_age(args):
    config, policy, sigma = _load_inputs(args)
    report = exact_age(config, policy, sigma)
    summary = io.age_summary(report)
    _emit(args, summary, {"age.csv": lambda path: io.write_age_csv(report, path)})


def _cmd_adversary(args):
    config, policy, _ = _load_inputs(args)
    if args.mode == "brute":
        jobs = args.threads or os.cpu_count() or 1
        res = brute_force_best_adversary(config, policy, cap=args.cap, n_jobs=jobs)
        summary = {
            "mode": "brute",
            "value": res.value,
            "evaluated": res.evaluated,
            "maximizers": [io.blocking_to_json(m) for m in res.argmax],
        }
        sigma = res.blocking
    else:
        cbs, value = cbs_scan_best_adversary(config, policy)
        summary = {"mode": "cbs-scan", "value": value}
        if cbs is None:
            sigma = BlockingMatrix.empty(config.n_targets, config.horizon)
        else:
            summary.update(target=cbs.target + 1, start=cbs.start + 1, length=cbs.length)
            sigma = cbs.to_blocking(config)
    _emit(args, summary, {"blocking.json": lambda path: io.write_blocking(sigma, path)})


def _closed_form(config, target):
    if isinstance(config.variant, Diversity):
        return uniform_policy(config)
    if isinstance(config.variant, GeneralK):
        return optimal_policy_general_k(config.n_users, config.variant.k, config.alpha_float, target)
    return optimal_policy_vs_cbs(config.n_users, config.alpha_float, target)


def _cmd_policy(args):
    config, _, sigma = _load_inputs(args)
    target = args.target - 1
    if not 0 <= target < config.n_users:
        raise ValidationError([f"--target {args.target} outside 1..{config.n_users}"])
    summary: dict = {"mode": args.mode}
    closed = None
    try:
        closed = _closed_form(config, target)
        summary["closed_form"] = io.policy_to_json(closed)
    except InfeasiblePolicyError as exc:
        summary["closed_form_error"] = str(exc)
    chosen = closed
    if args.mode == "numeric":
        if not args.blocking:
            length = min(config.budget, config.horizon)
            if length:
                # with diversity the run sits on sub-carrier 1
                jammed = 0 if isinstance(config.variant, Diversity) else target
                sigma = cbs_spec(config, jammed, length).to_blocking(config)
        chosen = numeric_best_policy(config, sigma, tolerance=args.tolerance)
        summary["numeric"] = io.policy_to_json(chosen)
        summary["value"] = exact_age(config, chosen, sigma).system_average
    if chosen is None:
        raise ValidationError([summary["closed_form_error"]])
    _emit(args, summary, {"policy.json": lambda path: io.write_policy(chosen, path)})


def _deviation_json(d: Deviation) -> dict:
    return {"side": d.side, "label": d.label, "value": d.value, "improving": d.improving, **d.detail}


def _trace_json(trace: DynamicsTrace) -> dict:
    return {
        "outcome": trace.outcome,
        "period": trace.period,
        "rounds": [
            {
                "policy": r.policy.user_pmf.tolist(),
                "target": None if r.cbs is None else r.cbs.target + 1,
                "value": r.value,
            }
            for r in trace.rounds
        ],
    }


def _adversary_json(adv):
    if adv is None:
        return None
    if isinstance(adv, BlockingMatrix):
        return io.blocking_to_json(adv)
    return {"target": adv.target + 1, "start": adv.start + 1, "length": adv.length}


def _cmd_equilibrium(args):
    config, _, _ = _load_inputs(args)
    if args.mode == "dynamics":
        if not isinstance(config.variant, NoDiversity):
            raise ValidationError(["dynamics need the no_diversity variant"])
        trace = best_response_dynamics(config, max_rounds=args.rounds)
        summary = _trace_json(trace)
        _emit(args, summary, {})
        return
    if args.mode == "stackelberg":
        if isinstance(config.variant, Diversity):
            raise ValidationError(["the Stackelberg point needs no_diversity or general_k"])
        res = stackelberg_point(config, n_policies=args.deviations, seed=args.seed)
    elif isinstance(config.variant, Diversity):
        res = verify_nash_diversity(config, n_deviations=args.deviations, seed=args.seed)
    elif isinstance(config.variant, GeneralK):
        raise ValidationError(["nash mode needs the no_diversity or diversity variant"])
    else:
        res = nash_no_diversity(config, max_rounds=args.rounds)
    evidence = [
        _trace_json(e) if isinstance(e, DynamicsTrace) else _deviation_json(e) for e in res.evidence
    ]
    summary = {
        "kind": res.kind,
        "bs_policy": io.policy_to_json(res.bs_policy),
        "adversary": _adversary_json(res.adversary),
        "value": res.value,
        "violations": len(res.violations),
        "evidence": evidence,
    }
    _emit(args, summary, {})
    if res.kind == NASH_REJECTED or res.violations:
        raise AuditFailure(f"{len(res.violations)} profitable deviation(s) found")


def _cmd_simulate(args):
    config, policy, sigma = _load_inputs(args)
    res = simulate(config, policy, sigma, args.seed, args.reps, args.threads)
    summary = {
        "reps": res.reps,
        "seed": res.seed,
        "mean_system_age": res.mean_system_age,
        "stderr": res.stderr,
        "per_user_means": res.per_user_means.tolist(),
    }
    _emit(args, summary, {"sim.csv": lambda path: io.write_sim_csv(res.per_rep, path)})


def _cmd_bounds(args):
    if args.full:
        from .acceptance import run_all

        results = run_all(
            seed=args.seed, threads=args.threads, report=lambda r: print(r.line(), file=sys.stderr)
        )
        rows = [{"criterion": r.number, "name": r.name, "passed": r.passed} for r in results]
        summary = {"criteria": rows, "passed": all(r.passed for r in results)}
    else:
        reports = run_bound_grid(seed=args.seed, threads=args.threads)
        rows = [
            {
                "name": r.name,
                "kind": r.kind,
                "bound": r.bound,
                "measured": r.measured,
                "stderr": r.stderr,
                "margin": r.margin,
                "passed": r.passed,
            }
            for r in reports
        ]
        summary = {"checks": rows, "passed": all(r.passed for r in reports)}
    _emit(args, summary, {})
    if not summary["passed"]:
        raise AuditFailure("bound check failed")


COMMANDS = {
    "exact-age": _cmd_exact_age,
    "adversary": _cmd_adversary,
    "policy": _cmd_policy,
    "equilibrium": _cmd_equilibrium,
    "simulate": _cmd_simulate,
    "bounds": _cmd_bounds,
}


def _report(diags) -> None:
    for d in diags:
        print(d.to_json(), file=sys.stderr)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for audits
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        COMMANDS[args.command](args)
    except io.FormatError as exc:
        _report(exc.diagnostics)
        return EXIT_INVALID
    except ValueError as exc:
        problems = exc.problems if isinstance(exc, ValidationError) else [str(exc)]
        _report([io.Diagnostic("<args>", 0, 0, p) for p in problems])
        return EXIT_INVALID
    except EnumerationCapExceeded as exc:
        print(json.dumps({"error": "cap_exceeded", "size": exc.size, "cap": exc.cap}), file=sys.stderr)
        return EXIT_CAP
    except AuditFailure as exc:
        print(json.dumps({"error": "audit_failed", "message": str(exc)}), file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line entry point: ``qprob <command> ...``.

Exit codes: 0 success, 1 campaign failed, 2 usage or unknown name,
3 precondition or numerical failure, 4 I/O or instance parse error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .. import __version__, calculus, conditional, qrv
from ..errors import InstanceError, QProbError
from ..herm import DEFAULT_TOL, Tolerances
from ..measure import SampleSpace, random_partition, random_povm, rng_for
from .campaigns import CAMPAIGNS, run_campaign
from .instance import Instance, encode_matrix, parse_instance, serialize_instance

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PRECONDITION, EXIT_IO = 0, 1, 2, 3, 4
TOL_ENV = "QPROB_DEFAULT_TOL"

class UsageError(Exception):
    pass

def resolve_tolerance(flag: float | None, environ=os.environ) -> float:
    """``--tol`` if given, else ``$QPROB_DEFAULT_TOL``, else the library default."""
    if flag is not None:
        return flag
    raw = environ.get(TOL_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_TOL.residual
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"{TOL_ENV}={raw!r} is not a number") from None
    if not value > 0:
        raise UsageError(f"{TOL_ENV} must be positive, got {raw}")
    return value

def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v

def _pointwise(space: SampleSpace, stack) -> dict:
    return {x: encode_matrix(M) for x, M in zip(space.labels, stack)}

def _emit(obj):
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")

def cmd_expect(inst: Instance, args, tol: Tolerances):
    nu, psi = inst.measure(args.measure), inst.qrv(args.qrv)
    return {"command": "expect", "result": encode_matrix(qrv.expectation(psi, nu, tol))}

def cmd_rnderiv(inst: Instance, args, tol: Tolerances):
    nu2, nu1 = inst.measure(args.num), inst.measure(args.den)
    phi = calculus.rn_derivative(nu2, nu1, tol)
    return {"command": "rnderiv", "result": _pointwise(phi.space, phi.values)}

def cmd_boxtimes(inst: Instance, args, tol: Tolerances):
    psi, nu2, nu1 = inst.qrv(args.qrv), inst.measure(args.num), inst.measure(args.den)
    out = calculus.boxtimes(psi, calculus.rn_derivative(nu2, nu1, tol), calculus.RNContext(nu1, tol))
    return {"command": "boxtimes", "result": _pointwise(out.space, out.values)}

def cmd_condexp(inst: Instance, args, tol: Tolerances):
    nu, psi, F = inst.measure(args.measure), inst.qrv(args.qrv), inst.partition(args.partition)
    res = conditional.cond_expectation(psi, nu, F, tol)
    blocks = [
        {"points": labels, "value": encode_matrix(v)}
        for labels, v in zip(F.labels(inst.space), res.block_values)
    ]
    return {
        "command": "condexp",
        "result": _pointwise(res.phi.space, res.phi.values),
        "blocks": blocks,
        "zero_mass_blocks": list(res.zero_mass_blocks),
    }

def cmd_law(inst: Instance, args, tol: Tolerances):
    nu, psi = inst.measure(args.measure), inst.qrv(args.qrv)
    m = qrv.law(psi, nu, args.grouping_tol)
    atoms = [
        {"points": [inst.space.labels[i] for i in g], "value": encode_matrix(a), "mass": encode_matrix(h)}
        for g, a, h in zip(m.groups, m.support, m.masses)
    ]
    return {"command": "law", "injective": len(m.groups) == psi.n, "result": atoms}

COMPUTATIONS = {
    "expect": cmd_expect,
    "rnderiv": cmd_rnderiv,
    "boxtimes": cmd_boxtimes,
    "condexp": cmd_condexp,
    "law": cmd_law,
}

def generate_instance(dim: int, points: int, seed: int) -> Instance:
    """Two probability measures with invertible atoms, a PSD random variable
    and a random partition, all drawn from ``seed``."""
    space = SampleSpace.of_size(points)
    nu1 = random_povm(space, dim, (seed, 1))
    nu2 = random_povm(space, dim, (seed, 2))
    psi = qrv.random_qrv(space, dim, (seed, 3), (0.0, 1.0))
    k = int(rng_for(seed, 4).integers(1, points + 1))
    F = random_partition(space, (seed, 5), k)
    return Instance(space, dim, {"nu1": nu1, "nu2": nu2}, {"psi": psi}, {"F": F})

def cmd_gen(args) -> int:
    if args.dim < 1 or args.points < 1:
        raise UsageError("--dim and --points must be positive")
    text = serialize_instance(generate_instance(args.dim, args.points, args.seed))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK

def cmd_verify(args, tolerance: float) -> int:
    try:
        report = run_campaign(args.theorem, args.trials, args.seed, args.dim, args.points, tolerance, args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    status = "pass" if report["pass"] else "FAIL"
    print(
        f"{args.theorem}: {status} max_residual={report['max_residual']} "
        f"failures={len(report['failures'])} trials={args.trials}",
        file=sys.stderr,
    )
    return EXIT_OK if report["pass"] else EXIT_FAIL

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qprob", description="Quantum probability on finite sample spaces.")
    p.add_argument("--version", action="version", version=f"qprob {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--tol", type=_positive_float, default=None,
                        help=f"residual tolerance (default: ${TOL_ENV} or {DEFAULT_TOL.residual})")

    def single(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("instance", help="instance JSON file")
        common(sp)
        return sp

    sp = single("expect", "quantum expectation of a random variable")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--qrv", required=True)

    sp = single("rnderiv", "Radon-Nikodym derivative d(num)/d(den)")
    sp.add_argument("--num", required=True)
    sp.add_argument("--den", required=True)

    sp = single("boxtimes", "qrv boxtimes d(num)/d(den), with den as context")
    sp.add_argument("--qrv", required=True)
    sp.add_argument("--num", required=True)
    sp.add_argument("--den", required=True)

    sp = single("condexp", "conditional expectation given a partition")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--qrv", required=True)
    sp.add_argument("--partition", required=True)

    sp = single("law", "law (pushforward measure) of a random variable")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--qrv", required=True)
    sp.add_argument("--grouping-tol", type=_positive_float, default=1e-9)

    sp = sub.add_parser("verify", help="run a seeded theorem-verification campaign")
    sp.add_argument("theorem", choices=sorted(CAMPAIGNS))
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dim", default="3", help="dimension, or an inclusive range like 2..6")
    sp.add_argument("--points", default="4", help="number of points, or a range like 2..8")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.add_argument("--out", help="write the report here instead of stdout")
    common(sp)

    sp = sub.add_parser("gen", help="write a seeded random instance")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--points", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-", help="output path ('-' for stdout)")
    return p

def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        tolerance = resolve_tolerance(args.tol)
        if args.command == "verify":
            if args.trials < 1 or args.jobs < 1:
                raise UsageError("--trials and --jobs must be positive")
            return cmd_verify(args, tolerance)
        tol = Tolerances(residual=tolerance)
        inst = parse_instance(args.instance, tol)
        _emit(COMPUTATIONS[args.command](inst, args, tol))
        return EXIT_OK
    except UsageError as exc:
        print(f"qprob: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"qprob: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceError, OSError) as exc:
        print(f"qprob: {exc}", file=sys.stderr)
        return EXIT_IO
    except (QProbError, ArithmeticError) as exc:
        print(f"qprob: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION

if __name__ == "__main__":
    sys.exit(main())

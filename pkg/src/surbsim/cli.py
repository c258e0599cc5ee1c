"""Command line entry point: ``surbsim run|check|search|sweep``.

Exit codes: 0 pass or found, 1 fail or absent, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .datalink import ContractParams, check_contract
from .engine import InputStream, execute
from .scenario import PROTOCOLS, ScenarioError, get_protocol, load_scenario
from .sequences import PreconditionError
from .surb import check_S1, check_S2
from .trace import TraceError, format_trace, read_trace

log = logging.getLogger("surbsim")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CONTRACTS = ("datalink", "surb-s1", "surb-s2")
CANDIDATES = ("echo", "surb", "byzantine", "byzantine-disabled")


class UsageError(Exception):
    pass


def parse_seed_range(text: str) -> range:
    """``A..B`` is the half-open range of seeds ``A, ..., B-1``."""
    lo, sep, hi = text.partition("..")
    if not sep:
        raise UsageError(f"seed range must look like A..B, got {text!r}")
    try:
        return range(int(lo), int(hi))
    except ValueError:
        raise UsageError(f"bad seed range {text!r}") from None


def evaluate(run, contract: str, args) -> tuple:
    """``(passed, report text, max ghosts or None)`` for one run."""
    if contract == "datalink":
        rep = check_contract(run, ContractParams(min_block=args.min_block))
        return rep.passed, rep.text(), rep.max_ghosts
    if contract == "surb-s1":
        rep = check_S1(run, args.window)
        return rep.passed, rep.text(), None
    rep = check_S2(run, args.window, args.value)
    return bool(rep.s2), rep.text(), None


def _scenario(args):
    sc = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    return replace(sc, **changes) if changes else sc


def cmd_run(args) -> int:
    sc = _scenario(args)
    text = format_trace(execute(sc), snapshots=args.snapshots)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    run = read_trace(args.trace)
    passed, text, _ = evaluate(run, args.contract, args)
    print(text)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_search(args) -> int:
    from .divergence import byzantine_scenario, search, write_witness

    horizon = args.horizon if args.horizon is not None else 100_000
    seed = args.seed or 0
    if args.candidate in ("byzantine", "byzantine-disabled"):
        w = byzantine_scenario(
            args.capacity, args.n, horizon, seed,
            script=args.candidate == "byzantine", wake=args.wake,
        )
    else:
        if args.candidate not in PROTOCOLS:
            raise UsageError(f"unknown candidate {args.candidate!r}")
        inputs = InputStream.parse(args.input) if args.input else None
        w = search(
            get_protocol(args.candidate, args.capacity), args.mode, horizon, seed,
            n=args.n, capacity=args.capacity, inputs=inputs,
        )
    if w is None:
        print("witness: absent")
        return EXIT_FAIL
    if args.out:
        write_witness(w, args.out)
    sys.stdout.write(w.summary())
    print("witness: found")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    seeds = parse_seed_range(args.seeds)
    passed = failed = 0
    max_ghost = 0
    for seed in seeds:
        run = execute(replace(sc, seed=seed))
        ok, text, ghosts = evaluate(run, args.contract, args)
        if ghosts is not None:
            max_ghost = max(max_ghost, ghosts)
        if ok:
            passed += 1
        else:
            failed += 1
            log.info("seed %d failed:\n%s", seed, text)
            print(f"seed={seed} fail")
    line = f"runs={len(seeds)} pass={passed} fail={failed}"
    if args.contract == "datalink":
        line += f" max_ghost={max_ghost}"
    print(line)
    return EXIT_OK if failed == 0 else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surbsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log failing seeds in sweeps")
    sub = p.add_subparsers(dest="command", required=True)

    def checker_opts(sp):
        sp.add_argument("--contract", choices=CONTRACTS, required=True)
        sp.add_argument("--window", type=int, default=8, help="agreement window W")
        sp.add_argument("--value", type=int, default=None, help="expected input value for surb-s2")
        sp.add_argument("--min-block", type=int, default=2,
                        help="shortest run of equal sends that must lead to a delivery")

    r = sub.add_parser("run", help="execute a scenario and write its trace")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=int)
    r.add_argument("--trace", help="output path (default: stdout)")
    r.add_argument("--snapshots", action="store_true", help="add network matrix lines")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="check a trace against a contract")
    c.add_argument("--trace", required=True)
    checker_opts(c)
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("search", help="look for a divergence witness")
    s.add_argument("--candidate", required=True, help=f"one of {', '.join(CANDIDATES)} or a protocol name")
    s.add_argument("--mode", choices=("semi-bounded", "fully-bounded"), default="semi-bounded")
    s.add_argument("--horizon", type=int, help="input reads (engine steps for byzantine)")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--capacity", type=int, default=None)
    s.add_argument("--input", help="input stream, e.g. incremental or repeat:1")
    s.add_argument("--wake", type=int, default=0, help="steps to run after waking the dormant party")
    s.add_argument("--out", help="directory for r5.trace, r6.trace and witness.txt")
    s.set_defaults(func=cmd_search)

    w = sub.add_parser("sweep", help="run and check a scenario over a seed range")
    w.add_argument("--scenario", required=True)
    w.add_argument("--seeds", required=True, help="half-open range A..B")
    w.add_argument("--horizon", type=int)
    checker_opts(w)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "search" and args.capacity is None:
        args.capacity = 1 if args.candidate.startswith("byzantine") else 2
    try:
        return args.func(args)
    except (ScenarioError, TraceError, UsageError, PreconditionError, OSError) as exc:
        print(f"surbsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``enkvote <command> ...``."""

from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path

from . import numtheory as nt
from .crypto import DEFAULT_PASSWORD_BITS
from .election import Administrator, CandidateSet, PublishedBoard, verify_package
from .errors import EnkVoteError, RoundCapExceededError
from .harness import files
from .harness.net import AdminServer, CounterServer, parse_address, vote
from .harness.simulation import run_election
from .security import attack_suite
from .security.attacks import SCENARIOS
from .security.costmodel import all_match, format_table, report_rows


def _group(text):
    if text in nt.WELL_KNOWN_PRIMES:
        return nt.GroupParams.well_known(text)
    return nt.GroupParams.from_text(text)


def _split(text, n):
    """``13,12`` -> voters 1..13 choose 1, voters 14..25 choose 2."""
    counts = [int(c) for c in text.split(",")]
    if sum(counts) != n:
        raise EnkVoteError(f"split {text} covers {sum(counts)} voters, manifest has {n}")
    choices, index = {}, 1
    for choice, count in enumerate(counts, 1):
        for _ in range(count):
            choices[index] = choice
            index += 1
    return choices


def cmd_setup(args):
    params = _group(args.group)
    # codes get their own stream; the setup stream is reserved for keys
    rng = random.Random(f"{args.seed}:candidates") if args.seed is not None else nt.default_rng()
    labels = [s.strip() for s in args.candidates.split(",")]
    candidates = CandidateSet.generate(labels, rng, args.code_bits)
    manifest = files.Manifest(params, candidates, args.voters, args.password_bits, args.mode, args.timeout,
                              args.round_cap)
    setup = files.derive_setup(manifest, args.seed)
    out = files.write_election(args.out, manifest, setup)
    print(f"wrote manifest and {args.voters + 2} credential files to {out}")
    return 0


def _write_run(out, result):
    out.mkdir(parents=True, exist_ok=True)
    (out / files.BOARD_FILE).write_text(result.export)
    (out / files.RUNLOG_FILE).write_text("\n".join(result.log.lines()) + "\n")
    for index, package in result.packages.items():
        (out / files.receipt_file(index)).write_text(files.receipt_text(package))


def cmd_run(args):
    directory = Path(args.dir)
    manifest, setup = files.load_election(directory)
    if args.split:
        choices = _split(args.split, manifest.n_voters)
    else:
        choices = files.parse_choices(Path(args.choices).read_text())
    out = Path(args.out) if args.out else directory
    try:
        result = run_election(manifest, choices, args.seed, credentials=setup)
    except RoundCapExceededError as exc:
        _write_run(out, exc.result)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_run(out, result)
    for label, count in result.tally.items():
        print(f"{label}: {count}")
    print(f"rounds: {result.rounds}; board written to {out / files.BOARD_FILE}")
    return 0


def cmd_serve_counter(args):
    manifest = files.Manifest.load(args.manifest)
    server = CounterServer(manifest, files.load_credential(args.credential), args.seed,
                           parse_address(args.listen))
    print(f"counter listening on {server.address[0]}:{server.address[1]}", flush=True)
    export = server.serve()
    if args.out:
        Path(args.out).write_text(export)
    sys.stdout.write(export)
    return 0


def cmd_serve_admin(args):
    manifest = files.Manifest.load(args.manifest)
    server = AdminServer(manifest, files.load_credential(args.credential), parse_address(args.connect),
                         args.seed, parse_address(args.listen), timeout=args.timeout)
    print(f"administrator listening on {server.address[0]}:{server.address[1]}", flush=True)
    export = server.serve()
    if args.out:
        Path(args.out).write_text(export)
    return 0


def cmd_vote(args):
    manifest = files.Manifest.load(args.manifest)
    cred = files.load_credential(args.credential)
    outcome = vote(parse_address(args.connect), manifest, cred, args.choice, args.seed, args.timeout)
    receipt = Path(args.receipt) if args.receipt else Path(args.credential).with_suffix(".receipt")
    receipt.write_text(files.receipt_text(outcome.package, args.choice))
    print(outcome.status)
    return 0 if outcome.status == "counted" else 1


def cmd_audit(args):
    cred = files.load_credential(args.credential)
    board = PublishedBoard.parse(Path(args.board).read_text())
    rows = Administrator(cred, None).audit(board)
    for row in rows:
        print(f"row {row.entry}: MAC mismatch ({row.to_line()})")
    if not rows:
        print(f"clean: {len(board.rows)} rows verified")
    return 1 if rows else 0


def cmd_verify(args):
    receipt = Path(args.receipt) if args.receipt else Path(args.credential).with_suffix(".receipt")
    files.load_credential(args.credential)
    package = files.parse_receipt(receipt.read_text(), str(receipt))
    status = verify_package(package, PublishedBoard.parse(Path(args.board).read_text()))
    print(status.value)
    return 0 if status.value == "counted" else 1


def cmd_attack(args):
    names = list(SCENARIOS) if args.scenario == "all" else [args.scenario]
    reports = attack_suite(names, params=_group(args.group), seed=args.seed, n_voters=args.voters,
                           workers=args.workers)
    for report in reports:
        print(report.line())
    return 0 if all(r.passed for r in reports) else 1


def cmd_costmodel(args):
    rows = report_rows(args.profile)
    print(format_table(rows))
    ok = all_match(rows)
    if not ok:
        print("mismatch against published values", file=sys.stderr)
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="enkvote", description="ENK-based voting: elections, audits and attacks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("setup", help="emit a manifest and per-party credentials")
    p.add_argument("--out", required=True)
    p.add_argument("--voters", type=int, required=True)
    p.add_argument("--candidates", required=True, help="comma-separated labels")
    p.add_argument("--group", default=nt.PRODUCTION_GROUP, help="modp2048, modp768 or <tag>:<modulus>")
    p.add_argument("--password-bits", type=int, default=DEFAULT_PASSWORD_BITS)
    p.add_argument("--code-bits", type=int, default=64)
    p.add_argument("--mode", choices=files.MODES, default="simulated")
    p.add_argument("--timeout", type=int, default=1, help="relay slack in virtual ticks")
    p.add_argument("--round-cap", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("run", help="simulated election")
    p.add_argument("--dir", required=True, help="directory written by setup")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--choices", help="choices script: '<voter> <choice>' per line")
    group.add_argument("--split", help="counts per candidate in voter order, e.g. 13,12")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: --dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve-counter", help="counter server (socket mode)")
    p.add_argument("--listen", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_serve_counter)

    p = sub.add_parser("serve-admin", help="administrator server (socket mode)")
    p.add_argument("--listen", required=True)
    p.add_argument("--connect", required=True, help="counter host:port")
    p.add_argument("--manifest", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_serve_admin)

    p = sub.add_parser("vote", help="cast one ballot (socket mode)")
    p.add_argument("--connect", required=True, help="administrator host:port")
    p.add_argument("--manifest", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--choice", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--receipt")
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("audit", help="check every board row against K_va")
    p.add_argument("--board", required=True)
    p.add_argument("--credential", required=True, help="administrator credential")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("verify", help="look up a voter's ballot on the board")
    p.add_argument("--board", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--receipt", help="default: the credential path with .receipt")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("attack", help="run an adversary scenario")
    p.add_argument("--scenario", required=True, choices=["all", *SCENARIOS])
    p.add_argument("--group", default=nt.TEST_GROUP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--voters", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("costmodel", help="physical-limits password sizing table")
    p.add_argument("--profile", choices=["generic", "ion-trap"], default="ion-trap")
    p.set_defaults(func=cmd_costmodel)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (EnkVoteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``tofu dist``, ``tofu fuzz`` and ``tofu replay``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .campaign import (
    MODES,
    MUTATORS,
    PHASES,
    CampaignError,
    ConfigError,
    FuzzConfig,
    emit_report,
    load_witness,
    replay,
    run_campaign,
    run_static_phase,
    summary_text,
)
from .fixtures import FIXTURES, fixture_paths
from .icfg import INF, load_icfg

log = logging.getLogger("tofu")


def _add_static_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--graph", type=Path, required=required, help="ICFG file")
    p.add_argument("--targets", type=Path, required=required, help="target list, one block id per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tofu", description="Directed greybox fuzzer driven by ICFG distances.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dist", help="compute distance files for a graph and its targets")
    _add_static_args(d)
    d.add_argument("--out", type=Path, required=True, help="directory for the .dist files")

    f = sub.add_parser("fuzz", help="run a directed fuzzing campaign")
    _add_static_args(f, required=False)
    f.add_argument("--fixture", choices=sorted(FIXTURES),
                   help="built-in specimen; supplies --program and default graph/targets/grammar/cmdspec")
    f.add_argument("--program", help="target executable, or fixture:<name>")
    f.add_argument("--grammar", type=Path)
    f.add_argument("--cmdspec", type=Path)
    f.add_argument("--corpus", type=Path, help="directory of initial inputs")
    f.add_argument("--timeout", type=float, required=True, help="campaign timeout in seconds")
    f.add_argument("--cmdline-timeout", type=float, help="seconds for the command-line phase (default: half)")
    f.add_argument("--per-exec-timeout", type=float, default=1.0)
    f.add_argument("--batch", type=int, default=120)
    f.add_argument("--parallelism", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--mode", choices=MODES, default="guided")
    f.add_argument("--mutator", choices=MUTATORS, default="structured")
    f.add_argument("--phases", choices=PHASES, default="staged")
    f.add_argument("--max-execs", type=int, default=0, help="execution budget (0: unlimited)")
    f.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("replay", help="re-run a witness and check that it covers its target")
    r.add_argument("--witness", type=Path, required=True)
    r.add_argument("--graph", type=Path, required=True)
    r.add_argument("--per-exec-timeout", type=float, default=5.0)
    return parser


def cmd_dist(args: argparse.Namespace) -> int:
    static = run_static_phase(args.graph, args.targets, args.out)
    entry = static.icfg.functions[static.icfg.main].entry
    for t in sorted(static.maps):
        d = static.maps[t][entry]
        if d == INF:
            print(f"{t}: statically unreachable from {entry}")
        else:
            print(f"{t}: distance from {entry} = {d:g}")
    print(f"wrote {len(static.maps)} distance file(s) to {args.out}")
    return 0


def config_from_args(args: argparse.Namespace) -> FuzzConfig:
    program, graph, targets = args.program, args.graph, args.targets
    grammar, cmdspec = args.grammar, args.cmdspec
    if args.fixture:
        paths = fixture_paths(args.fixture)
        program = program or f"fixture:{args.fixture}"
        graph = graph or paths["graph"]
        targets = targets or paths["targets"]
        grammar = grammar or paths.get("grammar")
        cmdspec = cmdspec or paths.get("cmdspec")
    missing = [n for n, v in (("--program", program), ("--graph", graph), ("--targets", targets)) if v is None]
    if missing:
        raise ConfigError(f"missing {', '.join(missing)} (or use --fixture)")
    return FuzzConfig(
        graph=graph, targets=targets, program=program, out=args.out,
        grammar=grammar, cmdspec=cmdspec, corpus=args.corpus,
        timeout=args.timeout, cmdline_timeout=args.cmdline_timeout,
        per_exec_timeout=args.per_exec_timeout, batch=args.batch, parallelism=args.parallelism,
        seed=args.seed, mode=args.mode, mutator=args.mutator, phases=args.phases,
        max_execs=args.max_execs,
    )


def cmd_fuzz(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    report = run_campaign(config)
    path = emit_report(report, config.out)
    sys.stdout.write(summary_text(report))
    print(f"report written to {path}")
    return 0 if report.all_reachable_covered else 1


def cmd_replay(args: argparse.Namespace) -> int:
    witness = load_witness(args.witness)
    icfg = load_icfg(args.graph)
    result = replay(witness, args.per_exec_timeout)
    unknown = sorted(result.coverage - set(icfg.blocks))
    if unknown:
        log.warning("coverage contains blocks missing from the graph: %s", ", ".join(unknown[:10]))
    hit = witness.target in result.coverage
    print(f"{witness.target}: {'covered' if hit else 'NOT covered'} ({result.exit}, {len(result.coverage)} blocks)")
    return 0 if hit else 1


COMMANDS = {"dist": cmd_dist, "fuzz": cmd_fuzz, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, CampaignError) as e:
        print(f"tofu {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

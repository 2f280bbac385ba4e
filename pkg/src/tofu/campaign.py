"""Campaign orchestration: the static phase (graph -> distance files) and
the dynamic phases (command-line fuzzing, then primary-file fuzzing)."""

from __future__ import annotations

import base64
import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

from . import cmdline as cl
from . import grammar as gr
from .distance import DistanceMap, compute_distances, sanitize, write_distance_files
from .harness import INPUT_PLACEHOLDER, ExecutionResult, make_target
from .icfg import INF, Icfg, TargetSpec, WeightedGraph, build_weighted_graph, load_icfg, load_targets, resolve_indirect_calls
from .scheduler import (
    CoverageDictionary,
    Seed,
    SeedQueue,
    TargetLedger,
    random_score,
    score_trace,
    try_insert,
    update_targets,
)

log = logging.getLogger("tofu")

MODES = ("guided", "unguided")
MUTATORS = ("structured", "havoc")
PHASES = ("staged", "cmdline-only", "file-only")
REPORT_VERSION = 1
SEED_DEPTH = 4  # depth limit for generated initial inputs and the phase-1 file


class ConfigError(ValueError):
    pass


class CampaignError(RuntimeError):
    pass


class StaticPhaseError(ValueError):
    """A graph, target or distance problem, tagged with the static phase."""


@dataclass
class FuzzConfig:
    graph: Path
    targets: Path
    program: str
    out: Path | None = None
    grammar: Path | None = None
    cmdspec: Path | None = None
    corpus: Path | None = None
    timeout: float = 60.0  # whole campaign
    cmdline_timeout: float | None = None  # phase-1 share; half the campaign when staged
    per_exec_timeout: float = 1.0
    batch: int = 120
    parallelism: int = 1
    seed: int = 0
    mode: str = "guided"
    mutator: str = "structured"
    phases: str = "staged"
    max_execs: int = 0  # 0 means unlimited
    max_depth: int = 12

    def __post_init__(self) -> None:
        for name in ("graph", "targets", "out", "grammar", "cmdspec", "corpus"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, Path):
                setattr(self, name, Path(value))
        if self.batch < 1:
            raise ConfigError("batch size must be >= 1")
        if self.timeout <= 0 or self.per_exec_timeout <= 0 or (self.cmdline_timeout is not None and self.cmdline_timeout <= 0):
            raise ConfigError("timeouts must be positive")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.max_execs < 0:
            raise ConfigError("max_execs must be >= 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mutator not in MUTATORS:
            raise ConfigError(f"mutator must be one of {MUTATORS}")
        if self.phases not in PHASES:
            raise ConfigError(f"phases must be one of {PHASES}")
        if self.phases == "file-only" and self.mutator == "structured" and self.grammar is None:
            raise ConfigError("the structured mutator requires a grammar")
        if self.phases == "cmdline-only" and self.cmdspec is None:
            raise ConfigError("cmdline-only fuzzing requires a command-line spec")


@dataclass(frozen=True)
class InputBundle:
    cmdline: cl.CmdlineState | None
    file: Union[gr.Node, bytes, None]
    argv: tuple[str, ...]
    data: bytes


def make_bundle(state: cl.CmdlineState | None, file: Union[gr.Node, bytes, None],
                spec: cl.CmdlineSpec | None) -> InputBundle:
    argv = tuple(cl.render_argv(state, spec)) if state is not None and spec is not None else (INPUT_PLACEHOLDER,)
    if isinstance(file, gr.Node):
        data = gr.render(file).encode("utf-8")
    else:
        data = file or b""
    return InputBundle(state, file, argv, data)


@dataclass
class TargetRow:
    target: str
    covered: bool = False
    reason: str | None = None
    first_hit_execs: int | None = None
    first_hit_phase: str | None = None
    first_hit_seconds: float | None = None
    witness: InputBundle | None = None


@dataclass
class PhaseReport:
    name: str
    executions: int = 0
    rounds: int = 0
    accepted: int = 0
    rejected: int = 0
    queue_size: int = 0
    pops: int = 0
    distinct_coverage_sets: int = 0
    best_score: float = INF
    best: InputBundle | None = None
    selections: list[int] = field(default_factory=list)


@dataclass
class CampaignReport:
    program: str
    seed: int
    mode: str
    mutator: str
    targets: dict[str, TargetRow]
    phases: list[PhaseReport]
    executions: int = 0
    frozen_argv: tuple[str, ...] | None = None
    wall_seconds: float = 0.0

    @property
    def phase1_best_argv(self) -> tuple[str, ...] | None:
        for p in self.phases:
            if p.name == "cmdline" and p.best is not None:
                return p.best.argv
        return None

    @property
    def all_reachable_covered(self) -> bool:
        return all(r.covered for r in self.targets.values() if r.reason != "statically-unreachable")


# --------------------------------------------------------------------------
# Static phase


@dataclass
class StaticResult:
    icfg: Icfg
    targets: TargetSpec
    graph: WeightedGraph
    maps: dict[str, DistanceMap]

    @property
    def unreachable(self) -> set[str]:
        entry = self.icfg.functions[self.icfg.main].entry
        return {t for t, m in self.maps.items() if m[entry] == INF}


def run_static_phase(graph_path: str | Path, targets_path: str | Path,
                     out: str | Path | None = None) -> StaticResult:
    try:
        icfg = resolve_indirect_calls(load_icfg(graph_path))
        targets = load_targets(targets_path, icfg)
        graph = build_weighted_graph(icfg, targets)
        maps = compute_distances(graph, targets)
    except ValueError as e:
        raise StaticPhaseError(f"static phase: {e}") from e
    if out is not None:
        write_distance_files(maps, out)
    return StaticResult(icfg, targets, graph, maps)


# --------------------------------------------------------------------------
# Dynamic phases


Mutate = Callable[[InputBundle, random.Random], InputBundle]
Generate = Callable[[random.Random], InputBundle]


class Campaign:
    def __init__(self, config: FuzzConfig, static: StaticResult | None = None):
        self.config = config
        self.static = static or run_static_phase(
            config.graph, config.targets, config.out / "distances" if config.out else None)
        self.maps = self.static.maps
        self.target = make_target(config.program, config.per_exec_timeout, config.parallelism)
        self.grammar = gr.load_grammar(config.grammar) if config.grammar else None
        self.cmdspec = cl.load_cmdline_spec(config.cmdspec) if config.cmdspec else None
        self.mconfig = gr.MutatorConfig(max_depth=config.max_depth)

        unreachable = self.static.unreachable
        reachable = frozenset(self.static.targets.targets - unreachable)
        self.ledger = TargetLedger(reachable)
        self.rows = {t: TargetRow(t) for t in sorted(self.static.targets.targets)}
        for t in unreachable:
            self.rows[t].reason = "statically-unreachable"
            log.warning("target %s is statically unreachable from %s", t, self.static.icfg.main)
        self.executions = 0
        self.phases: list[PhaseReport] = []
        self.frozen_argv: tuple[str, ...] | None = None
        self.started = time.monotonic()
        self.deadline = self.started + config.timeout

    # -- helpers ---------------------------------------------------------

    def _rng(self, *parts: str) -> random.Random:
        return random.Random(":".join([str(self.config.seed), *parts]))

    def _budget_left(self) -> int | None:
        if not self.config.max_execs:
            return None
        return max(self.config.max_execs - self.executions, 0)

    def _corpus(self) -> list[bytes]:
        if self.config.corpus is None:
            return []
        return [p.read_bytes() for p in sorted(self.config.corpus.iterdir()) if p.is_file()]

    def _evaluate(self, bundles: Sequence[InputBundle], phase: PhaseReport, queue: SeedQueue,
                  dictionary: CoverageDictionary, sched_rng: random.Random, score_rng: random.Random) -> None:
        left = self._budget_left()
        if left is not None:
            bundles = bundles[:left]
        results: list[ExecutionResult] = self.target.run_batch([(b.argv, b.data) for b in bundles])
        for bundle, res in zip(bundles, results):
            self.executions += 1
            phase.executions += 1
            raw = score_trace(res.coverage, self.maps, self.ledger)
            if raw < phase.best_score:
                phase.best_score, phase.best = raw, bundle
            for t in sorted(update_targets(res.coverage, self.ledger)):
                row = self.rows[t]
                row.covered, row.witness = True, bundle
                row.first_hit_execs, row.first_hit_phase = self.executions, phase.name
                row.first_hit_seconds = time.monotonic() - self.started
                log.info("covered %s after %d executions", t, self.executions)
            if self.config.mode == "guided":
                score = score_trace(res.coverage, self.maps, self.ledger)
            else:
                score = random_score(score_rng)
            if try_insert(Seed(bundle, res.coverage, score), queue, dictionary, sched_rng):
                phase.accepted += 1
            else:
                phase.rejected += 1

    def run_phase(self, name: str, initial: Sequence[InputBundle], mutate: Mutate,
                  regenerate: Generate | None, deadline: float | None = None) -> PhaseReport:
        """Select / mutate / execute / prioritise until every target is
        covered, the phase times out, or the execution budget runs out."""
        phase = PhaseReport(name)
        self.phases.append(phase)
        queue, dictionary = SeedQueue(), CoverageDictionary()
        sched_rng, score_rng, mut_rng = (self._rng(name, s) for s in ("schedule", "score", "mutate"))
        deadline = self.deadline if deadline is None else min(deadline, self.deadline)

        def out_of_time() -> bool:
            return time.monotonic() >= deadline or self._budget_left() == 0

        if not self.ledger.done:
            self._evaluate(initial, phase, queue, dictionary, sched_rng, score_rng)
        while not self.ledger.done and not out_of_time():
            if len(queue) == 0:
                if regenerate is None:
                    raise CampaignError(f"{name} phase: seed queue is empty and inputs cannot be generated")
                batch = [regenerate(mut_rng) for _ in range(self.config.batch)]
            else:
                parent = queue.select_next()
                phase.selections.append(parent.insert_seq)
                batch = [mutate(parent.input, mut_rng) for _ in range(self.config.batch)]
            self._evaluate(batch, phase, queue, dictionary, sched_rng, score_rng)
            phase.rounds += 1
        phase.queue_size = len(queue)
        phase.pops = queue.pops
        phase.distinct_coverage_sets = len(dictionary.counts)
        return phase

    def _seed_config(self) -> gr.MutatorConfig:
        return gr.MutatorConfig(max_depth=min(self.config.max_depth, SEED_DEPTH))

    def default_file(self) -> Union[gr.Node, bytes]:
        """Fixed primary file used while only the command line is fuzzed."""
        if self.grammar is None:
            return b""
        tree = gr.generate(self.grammar, self._seed_config(), random.Random(0))
        return tree if self.config.mutator == "structured" else gr.render(tree).encode("utf-8")

    def cmdline_phase(self, share: float = 1.0) -> PhaseReport:
        spec = self.cmdspec
        assert spec is not None
        fixed = self.default_file()
        start = cl.initial_state(spec)

        def mutate(b: InputBundle, rng: random.Random) -> InputBundle:
            return make_bundle(cl.mutate_cmdline(b.cmdline, spec, rng), b.file, spec)

        def regenerate(rng: random.Random) -> InputBundle:
            return make_bundle(cl.mutate_cmdline(start, spec, rng), fixed, spec)

        seconds = self.config.cmdline_timeout or self.config.timeout * share
        phase = self.run_phase("cmdline", [make_bundle(start, fixed, spec)], mutate, regenerate,
                               time.monotonic() + seconds)
        if phase.best is not None:
            log.info("best command line after phase 1: %s (score %s)", list(phase.best.argv), phase.best_score)
        return phase

    def file_phase(self, state: cl.CmdlineState | None) -> PhaseReport:
        spec = self.cmdspec
        if state is not None and spec is not None and INPUT_PLACEHOLDER not in cl.render_argv(state, spec):
            log.warning("frozen command line has no %s token; the primary file is never read", INPUT_PLACEHOLDER)
        structured = self.config.mutator == "structured"
        grammar, mcfg = self.grammar, self.mconfig
        if structured and grammar is None:
            raise ConfigError("the structured mutator requires a grammar")

        initial: list[InputBundle] = []
        for raw in self._corpus():
            if not structured:
                initial.append(make_bundle(state, raw, spec))
                continue
            try:
                tree = gr.parse(raw.decode("utf-8"), grammar, mcfg.parse_budget)
            except (UnicodeDecodeError, gr.ParseError) as e:
                log.warning("skipping unusable initial input: %s", e)
                continue
            initial.append(make_bundle(state, tree, spec))

        seed_cfg = self._seed_config()

        def fresh(rng: random.Random) -> InputBundle:
            if grammar is None:
                return make_bundle(state, gr.havoc_mutate(b"", rng), spec)
            tree = gr.generate(grammar, seed_cfg, rng)
            return make_bundle(state, tree if structured else gr.render(tree).encode("utf-8"), spec)

        if not initial:
            init_rng = self._rng("initial")
            initial = [fresh(init_rng) for _ in range(self.config.batch)]

        if structured:
            def mutate(b: InputBundle, rng: random.Random) -> InputBundle:
                return make_bundle(state, gr.mutate(b.file, grammar, mcfg, rng), spec)
            regenerate = fresh
        else:
            def mutate(b: InputBundle, rng: random.Random) -> InputBundle:
                return make_bundle(state, gr.havoc_mutate(b.data, rng), spec)

            def regenerate(rng: random.Random) -> InputBundle:
                return make_bundle(state, gr.havoc_mutate(b"", rng), spec)

        return self.run_phase("file", initial, mutate, regenerate)

    def run(self) -> CampaignReport:
        phases = self.config.phases
        if phases == "staged" and self.cmdspec is None:
            log.warning("no command-line spec given; staged campaign runs the file phase only")
            phases = "file-only"
        if phases == "staged" and self.grammar is None and self.config.mutator == "structured":
            log.warning("no grammar given; staged campaign runs the command-line phase only")
            phases = "cmdline-only"

        state = cl.initial_state(self.cmdspec) if self.cmdspec is not None else None
        if phases in ("staged", "cmdline-only"):
            p1 = self.cmdline_phase(0.5 if phases == "staged" else 1.0)
            if p1.best is not None:
                state = p1.best.cmdline
        if self.cmdspec is not None and state is not None:
            self.frozen_argv = tuple(cl.render_argv(state, self.cmdspec))
        if phases in ("staged", "file-only"):
            if self.ledger.done:
                log.info("all targets covered before the file phase; skipping it")
            else:
                self.file_phase(state)
        return self.report()

    def report(self) -> CampaignReport:
        for row in self.rows.values():
            if not row.covered and row.reason is None:
                row.reason = "timeout"
        return CampaignReport(
            program=self.target.name, seed=self.config.seed, mode=self.config.mode,
            mutator=self.config.mutator, targets=self.rows, phases=self.phases,
            executions=self.executions, frozen_argv=self.frozen_argv,
            wall_seconds=time.monotonic() - self.started,
        )


def run_campaign(config: FuzzConfig) -> CampaignReport:
    return Campaign(config).run()


# --------------------------------------------------------------------------
# Reports and witnesses

SELECTION_LOG_LIMIT = 500


def _score(x: float) -> float | str:
    return "INF" if x == INF else round(x, 6)


def witness_record(report: CampaignReport, row: TargetRow) -> dict:
    w = row.witness
    assert w is not None
    return {
        "target": row.target,
        "program": report.program,
        "argv": list(w.argv),
        "input_b64": base64.b64encode(w.data).decode("ascii"),
    }


def report_dict(report: CampaignReport) -> dict:
    """Deterministic part of a report: no wall-clock values."""
    rows = []
    for t, row in sorted(report.targets.items()):
        entry = {"target": t, "covered": row.covered}
        if row.covered:
            entry.update(first_hit_execs=row.first_hit_execs, phase=row.first_hit_phase,
                         witness=f"witnesses/{sanitize(t)}.json")
        else:
            entry["reason"] = row.reason
        rows.append(entry)
    phases = [{
        "name": p.name,
        "executions": p.executions,
        "rounds": p.rounds,
        "best_score": _score(p.best_score),
        "best_argv": list(p.best.argv) if p.best else None,
        "queue": {"size": p.queue_size, "pops": p.pops, "accepted": p.accepted,
                  "rejected": p.rejected, "distinct_coverage_sets": p.distinct_coverage_sets},
        "selections": p.selections[:SELECTION_LOG_LIMIT],
    } for p in report.phases]
    return {
        "version": REPORT_VERSION,
        "program": report.program,
        "seed": report.seed,
        "mode": report.mode,
        "mutator": report.mutator,
        "executions": report.executions,
        "all_reachable_covered": report.all_reachable_covered,
        "phase1_best_argv": list(report.phase1_best_argv) if report.phase1_best_argv else None,
        "frozen_argv": list(report.frozen_argv) if report.frozen_argv is not None else None,
        "targets": rows,
        "phases": phases,
    }


def summary_text(report: CampaignReport) -> str:
    covered = sum(r.covered for r in report.targets.values())
    lines = [
        f"program:    {report.program}",
        f"seed:       {report.seed} ({report.mode}, {report.mutator})",
        f"executions: {report.executions}",
        f"covered:    {covered}/{len(report.targets)} targets",
    ]
    if report.phase1_best_argv is not None:
        lines.append(f"phase-1 best command line: {' '.join(report.phase1_best_argv)}")
    lines.append("")
    for t, row in sorted(report.targets.items()):
        if row.covered:
            lines.append(f"  {t:<30} covered after {row.first_hit_execs} executions ({row.first_hit_phase} phase)")
        else:
            lines.append(f"  {t:<30} not covered: {row.reason}")
    return "\n".join(lines) + "\n"


def emit_report(report: CampaignReport, out: str | Path) -> Path:
    """Write report.json, summary.txt, timing.json and witnesses/ under ``out``."""
    out = Path(out)
    wdir = out / "witnesses"
    wdir.mkdir(parents=True, exist_ok=True)
    for t, row in sorted(report.targets.items()):
        if row.covered:
            stem = sanitize(t)
            (wdir / f"{stem}.json").write_text(json.dumps(witness_record(report, row), indent=2) + "\n")
            (wdir / f"{stem}.input").write_bytes(row.witness.data)
    path = out / "report.json"
    path.write_text(json.dumps(report_dict(report), indent=2, sort_keys=True) + "\n")
    (out / "summary.txt").write_text(summary_text(report))
    timing = {
        "wall_seconds": round(report.wall_seconds, 3),
        "first_hit_seconds": {t: round(r.first_hit_seconds, 3)
                              for t, r in sorted(report.targets.items()) if r.covered},
    }
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return path


@dataclass(frozen=True)
class Witness:
    target: str
    program: str
    argv: tuple[str, ...]
    data: bytes


def load_witness(path: str | Path) -> Witness:
    rec = json.loads(Path(path).read_text())
    return Witness(rec["target"], rec["program"], tuple(rec["argv"]), base64.b64decode(rec["input_b64"]))


def replay(witness: Witness, per_exec_timeout: float = 5.0) -> ExecutionResult:
    return make_target(witness.program, per_exec_timeout).run(list(witness.argv), witness.data)

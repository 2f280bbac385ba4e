"""Interpreted specimen programs with hand-built graph files.

Each fixture mirrors its ``data/<name>.icfg`` block for block: it records
a block id every time control enters that block, so consecutive trace
entries always follow an intra, call or return edge of the graph.

``python -m tofu.fixtures <name> [args...]`` runs a fixture as an external
process honouring TOFU_COVERAGE_FILE.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Callable, Sequence

from ..harness import Exit, ExecutionResult

DATA = Path(__file__).parent / "data"

Recorder = Callable[[str], None]


def fixture_paths(name: str) -> dict[str, Path]:
    """Graph, targets and (where present) grammar / cmdline spec of a fixture."""
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}")
    paths = {"graph": DATA / f"{name}.icfg", "targets": DATA / f"{name}.targets"}
    for key, suffix in (("grammar", ".grammar"), ("cmdspec", ".cmdspec")):
        p = DATA / f"{name}{suffix}"
        if p.exists():
            paths[key] = p
    return paths


# --------------------------------------------------------------------------
# validate: palindrome check followed by counting 'a's


def _check(s: bytes, hit: Recorder) -> bool:
    hit("check:0")
    if len(s) % 2:
        hit("check:5")
        hit("check:6")
        return False
    i = 0
    while True:
        hit("check:1")
        if i >= len(s) // 2:
            hit("check:4")
            hit("check:6")
            return True
        hit("check:2")
        if s[i] not in b"ab":
            break
        hit("check:3")
        if s[i] != s[len(s) - 1 - i]:
            break
        i += 1
    hit("check:5")
    hit("check:6")
    return False


def _count_a(s: bytes, hit: Recorder) -> int:
    hit("count_a:0")
    n = i = 0
    while True:
        hit("count_a:1")
        if i >= len(s):
            hit("count_a:4")
            return n
        hit("count_a:2")
        if s[i] == ord("a"):
            hit("count_a:3")
            n += 1
        i += 1


def validate(argv: Sequence[str], data: bytes, hit: Recorder) -> int:
    hit("main:0")
    valid = _check(data, hit)
    hit("main:1")
    if not valid:
        hit("main:2")
        hit("main:6")
        return 1
    hit("main:3")
    n = _count_a(data, hit)
    hit("main:4")
    if n == 10:
        hit("main:5")
    hit("main:6")
    return 0


# --------------------------------------------------------------------------
# flagdemo: option parsing in front of a diff-like comparison


def _read(path: str | None) -> str:
    if path is None:
        return ""
    try:
        return Path(path).read_text(encoding="utf-8", errors="replace")
    except OSError:
        return ""


def _diff_2_files(a: str, b: str, opts: dict[str, bool], hit: Recorder) -> int:
    hit("diff_2_files:0")
    if opts["brief"]:
        hit("diff_2_files:1")
        hit("diff_2_files:9")
        return int(a != b)
    hit("diff_2_files:2")
    if opts["ignore_case"]:
        hit("diff_2_files:3")
        a, b = a.lower(), b.lower()
    hit("diff_2_files:4")
    if opts["ignore_space"]:
        hit("diff_2_files:5")
        a, b = " ".join(a.split(" ")), " ".join(b.split(" "))
    hit("diff_2_files:6")
    differ = a != b
    if opts["ignore_blank_lines"]:
        hit("diff_2_files:7")
        a_lines = [ln for ln in a.splitlines() if ln.strip()]
        b_lines = [ln for ln in b.splitlines() if ln.strip()]
        differ = a_lines != b_lines
        if differ:
            hit("diff_2_files:8")
    hit("diff_2_files:9")
    return int(differ)


def flagdemo(argv: Sequence[str], data: bytes, hit: Recorder) -> int:
    hit("main:0")
    opts = dict.fromkeys(("ignore_blank_lines", "ignore_case", "ignore_space", "brief"), False)
    operands: list[str] = []
    flags = {"-B": ("main:3", "ignore_blank_lines"), "-i": ("main:4", "ignore_case"),
             "-w": ("main:5", "ignore_space"), "--brief": ("main:6", "brief")}
    for arg in argv:
        hit("main:1")
        hit("main:2")
        if arg in flags:
            block, opt = flags[arg]
            hit(block)
            opts[opt] = True
        else:
            hit("main:7")
            operands.append(arg)
    hit("main:1")
    hit("main:8")
    operands += [None, None]  # missing operands read as empty input
    status = _diff_2_files(_read(operands[0]), _read(operands[1]), opts, hit)
    hit("main:9")
    return status


# --------------------------------------------------------------------------
# maze: nested equality checks on five fields

MAZE_KEY = (7, 3, 12, 5, 9)


def _parse_fields(text: str, hit: Recorder) -> list[int] | None:
    hit("parse_fields:0")
    fields: list[int] = []
    for part in text.split(","):
        hit("parse_fields:1")
        hit("parse_fields:2")
        if not (part.isascii() and part.isdigit()):
            hit("parse_fields:5")
            hit("parse_fields:6")
            return None
        hit("parse_fields:3")
        fields.append(int(part))
    hit("parse_fields:1")
    hit("parse_fields:4")
    hit("parse_fields:6")
    return fields


def maze(argv: Sequence[str], data: bytes, hit: Recorder) -> int:
    hit("main:0")
    fields = _parse_fields(data.decode("latin-1"), hit)
    hit("main:1")
    if fields is None or len(fields) != len(MAZE_KEY):
        hit("main:8")
        hit("main:9")
        return 1
    for i, (got, want) in enumerate(zip(fields, MAZE_KEY)):
        hit(f"main:{2 + i}")
        if got != want:
            hit("main:9")
            return 0
    hit("main:7")
    hit("main:9")
    return 0


FIXTURES: dict[str, Callable[[Sequence[str], bytes, Recorder], int]] = {
    "validate": validate,
    "flagdemo": flagdemo,
    "maze": maze,
}


def run_fixture(name: str, argv: Sequence[str], data: bytes = b"") -> ExecutionResult:
    """Run a fixture in-process and return its coverage."""
    try:
        program = FIXTURES[name]
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}") from None
    trace: list[str] = []
    start = time.perf_counter()
    code = program(list(argv), data, trace.append)
    duration = time.perf_counter() - start
    return ExecutionResult(frozenset(trace), Exit("normal", code), duration, tuple(trace))

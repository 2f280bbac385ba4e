"""Structured mutator for command-line languages described by a
pipe-delimited flag specification, one entry per line::

    --silent|optional|no option
    -n|optional|int|0,9
    --mode|optional|oneof|fast,slow
    file1|required|directory|inputs

Names starting with ``-`` are flags; other names are positionals, which
must be required and valued.  ``directory`` paths are resolved relative to
the directory holding the flag file.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Union

REQUIREMENTS = ("required", "optional")


class CmdlineSpecError(ValueError):
    pass


@dataclass(frozen=True)
class NoOption:
    pass


@dataclass(frozen=True)
class DirectoryValue:
    path: str
    files: tuple[str, ...]


@dataclass(frozen=True)
class OneOfValue:
    options: tuple[str, ...]


@dataclass(frozen=True)
class IntValue:
    lo: int
    hi: int


OptionKind = Union[NoOption, DirectoryValue, OneOfValue, IntValue]


@dataclass(frozen=True)
class CmdlineEntry:
    name: str
    required: bool
    kind: OptionKind

    @property
    def is_flag(self) -> bool:
        return self.name.startswith("-")

    @property
    def valued(self) -> bool:
        return not isinstance(self.kind, NoOption)

    def domain(self) -> list[str]:
        """All values this entry can take, in canonical order."""
        k = self.kind
        if isinstance(k, DirectoryValue):
            return list(k.files)
        if isinstance(k, OneOfValue):
            return list(k.options)
        if isinstance(k, IntValue):
            return [str(v) for v in range(k.lo, k.hi + 1)]
        return []


@dataclass(frozen=True)
class CmdlineSpec:
    entries: tuple[CmdlineEntry, ...]

    def __getitem__(self, name: str) -> CmdlineEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


# Absent entries are missing from the mapping; ``True`` marks a present
# no-option flag; strings are values.
Choice = Union[bool, str]


@dataclass(frozen=True)
class CmdlineState:
    chosen: tuple[tuple[str, Choice], ...]

    def as_dict(self) -> dict[str, Choice]:
        return dict(self.chosen)

    @classmethod
    def from_dict(cls, spec: CmdlineSpec, chosen: dict[str, Choice]) -> "CmdlineState":
        return cls(tuple((e.name, chosen[e.name]) for e in spec.entries if e.name in chosen))


def _parse_kind(fields: list[str], base: Path, lineno: int) -> OptionKind:
    kind, args = fields[0].strip(), [f.strip() for f in fields[1:]]
    if kind == "no option":
        if args:
            raise CmdlineSpecError(f"line {lineno}: 'no option' takes no argument")
        return NoOption()
    if len(args) != 1:
        raise CmdlineSpecError(f"line {lineno}: option kind {kind!r} needs one argument")
    arg = args[0]
    if kind == "directory":
        d = Path(arg)
        if not d.is_absolute():
            d = base / d
        if not d.is_dir():
            raise CmdlineSpecError(f"line {lineno}: missing directory {d}")
        files = tuple(str(p) for p in sorted(d.iterdir()) if p.is_file())
        return DirectoryValue(str(d), files)
    if kind == "oneof":
        opts = tuple(v.strip() for v in arg.split(",") if v.strip())
        if not opts:
            raise CmdlineSpecError(f"line {lineno}: oneof needs at least one value")
        return OneOfValue(opts)
    if kind == "int":
        try:
            lo, hi = (int(v) for v in arg.split(","))
        except ValueError:
            raise CmdlineSpecError(f"line {lineno}: int range must be 'lo,hi'") from None
        if lo > hi:
            raise CmdlineSpecError(f"line {lineno}: empty int range {lo},{hi}")
        return IntValue(lo, hi)
    raise CmdlineSpecError(f"line {lineno}: unknown option kind {kind!r}")


def parse_cmdline_spec(text: str, base: str | Path = ".") -> CmdlineSpec:
    base = Path(base)
    entries: list[CmdlineEntry] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("|")
        if len(fields) < 3:
            raise CmdlineSpecError(f"line {lineno}: expected name|requirement|kind[|arg]")
        name, requirement = fields[0].strip(), fields[1].strip()
        if not name or any(c.isspace() for c in name):
            raise CmdlineSpecError(f"line {lineno}: bad entry name {name!r}")
        if requirement not in REQUIREMENTS:
            raise CmdlineSpecError(f"line {lineno}: unknown requirement {requirement!r}")
        entry = CmdlineEntry(name, requirement == "required", _parse_kind(fields[2:], base, lineno))
        if any(e.name == name for e in entries):
            raise CmdlineSpecError(f"line {lineno}: duplicate entry {name}")
        if not entry.is_flag and not (entry.required and entry.valued):
            raise CmdlineSpecError(f"line {lineno}: positional {name} must be required and valued")
        entries.append(entry)
    return CmdlineSpec(tuple(entries))


def load_cmdline_spec(path: str | Path) -> CmdlineSpec:
    path = Path(path)
    return parse_cmdline_spec(path.read_text(encoding="utf-8"), path.parent)


def initial_state(spec: CmdlineSpec) -> CmdlineState:
    chosen: dict[str, Choice] = {}
    for e in spec.entries:
        if not e.required:
            continue
        if not e.valued:
            chosen[e.name] = True
            continue
        domain = e.domain()
        if not domain:
            raise CmdlineSpecError(f"required entry {e.name} has no values (empty directory?)")
        chosen[e.name] = domain[0]
    return CmdlineState.from_dict(spec, chosen)


def is_valid(state: CmdlineState, spec: CmdlineSpec) -> bool:
    chosen = state.as_dict()
    names = {e.name for e in spec.entries}
    if set(chosen) - names:
        return False
    for e in spec.entries:
        if e.name not in chosen:
            if e.required:
                return False
            continue
        v = chosen[e.name]
        if e.valued:
            if not isinstance(v, str) or v not in e.domain():
                return False
        elif v is not True:
            return False
    return True


def _mutable(e: CmdlineEntry) -> bool:
    return not e.required or len(e.domain()) > 1


def mutate_cmdline(state: CmdlineState, spec: CmdlineSpec, rng: random.Random) -> CmdlineState:
    """Toggle an optional entry or re-draw a value, once or twice."""
    chosen = state.as_dict()
    candidates = [e for e in spec.entries if _mutable(e)]
    if not candidates:
        return state
    for _ in range(rng.randint(1, 2)):
        e = rng.choice(candidates)
        present = e.name in chosen
        domain = e.domain()
        # A present valued entry with alternatives may either be re-drawn or dropped.
        if present and e.valued and len(domain) > 1 and (e.required or rng.random() < 0.5):
            old = chosen[e.name]
            chosen[e.name] = rng.choice([v for v in domain if v != old])
        elif present and not e.required:
            del chosen[e.name]
        elif not present:
            chosen[e.name] = rng.choice(domain) if e.valued else True
    return CmdlineState.from_dict(spec, chosen)


def render_argv(state: CmdlineState, spec: CmdlineSpec) -> list[str]:
    chosen = state.as_dict()
    argv: list[str] = []
    for e in spec.entries:
        if e.is_flag and e.name in chosen:
            argv.append(e.name)
            if e.valued:
                argv.append(chosen[e.name])
    for e in spec.entries:
        if not e.is_flag and e.name in chosen:
            argv.append(chosen[e.name])
    return argv


def parse_argv(argv: list[str], spec: CmdlineSpec) -> CmdlineState:
    """Inverse of render_argv; raises CmdlineSpecError on argv it cannot produce."""
    flags = {e.name: e for e in spec.entries if e.is_flag}
    positionals = [e for e in spec.entries if not e.is_flag]
    chosen: dict[str, Choice] = {}
    i = 0
    while i < len(argv) and argv[i] in flags:
        e = flags[argv[i]]
        if e.name in chosen:
            raise CmdlineSpecError(f"repeated flag {e.name}")
        if e.valued:
            if i + 1 >= len(argv):
                raise CmdlineSpecError(f"flag {e.name} is missing its value")
            chosen[e.name] = argv[i + 1]
            i += 2
        else:
            chosen[e.name] = True
            i += 1
    rest = argv[i:]
    if len(rest) != len(positionals):
        raise CmdlineSpecError(f"expected {len(positionals)} positionals, got {len(rest)}")
    for e, v in zip(positionals, rest):
        chosen[e.name] = v
    state = CmdlineState.from_dict(spec, chosen)
    if not is_valid(state, spec):
        raise CmdlineSpecError(f"argv {argv} does not satisfy the command-line spec")
    return state

"""Grammar-driven input structure: load a grammar file, generate, parse,
mutate and render derivation trees.

Grammar files look like::

    # even-length palindromes over {a, b}
    start S
    S -> "a" S "a" | "b" S "b" | ""

Terminals are quoted literals, ``int(lo,hi)``, ``class([a-z])`` (one
character) or ``oneof("x","y")``.  Any symbol may carry a ``?``, ``*`` or
``+`` suffix.  A line starting with ``|`` continues the previous rule.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Union

OPERATORS = ("replace_subtree", "delete_optional", "duplicate_repeated", "mutate_terminal", "swap_siblings")


class GrammarError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ParseBudgetExceeded(ParseError):
    pass


# --------------------------------------------------------------------------
# Grammar model


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int


@dataclass(frozen=True)
class CharClass:
    pattern: str
    chars: tuple[str, ...]


@dataclass(frozen=True)
class OneOf:
    options: tuple[str, ...]


Symbol = Union[Ref, Literal, IntRange, CharClass, OneOf]


@dataclass(frozen=True)
class Item:
    symbol: Symbol
    rep: str = ""  # "", "?", "*" or "+"


Production = tuple[Item, ...]


@dataclass
class GrammarSpec:
    start: str
    rules: dict[str, list[Production]]
    min_depth: dict[str, int] = field(default_factory=dict, compare=False)
    alt_depth: dict[str, list[int]] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        check_grammar(self)
        self.alt_depth, self.min_depth = _depth_costs(self.rules)


@dataclass(frozen=True)
class Leaf:
    value: str


@dataclass(frozen=True)
class Node:
    """Derivation tree node; one slot per item of the chosen production,
    each slot holding that item's repetitions."""

    symbol: str
    alt: int
    slots: tuple[tuple[Union["Node", Leaf], ...], ...]


SyntaxTree = Node


@dataclass
class MutatorConfig:
    max_depth: int = 12
    max_repeat: int = 4
    weights: dict[str, float] = field(default_factory=lambda: dict.fromkeys(OPERATORS, 1.0))
    mutations_per_call: tuple[int, int] = (1, 3)
    max_retries: int = 8
    parse_budget: int = 200_000

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_repeat < 1:
            raise ValueError("max_repeat must be >= 1")
        unknown = set(self.weights) - set(OPERATORS)
        if unknown:
            raise ValueError(f"unknown mutation operator {sorted(unknown)[0]}")
        if any(w < 0 for w in self.weights.values()) or not any(w > 0 for w in self.weights.values()):
            raise ValueError("operator weights must be non-negative with at least one positive")
        lo, hi = self.mutations_per_call
        if not 1 <= lo <= hi:
            raise ValueError("mutations_per_call must be a range 1 <= lo <= hi")


# --------------------------------------------------------------------------
# Loading


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#.*)
  | (?P<arrow>->)
  | (?P<bar>\|)
  | (?P<string>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
  | (?P<int>int\(\s*(?P<lo>-?\d+)\s*,\s*(?P<hi>-?\d+)\s*\))
  | (?P<cls>class\((?P<pattern>\[(?:\\.|[^\]\\])*\])\))
  | (?P<oneof>oneof\((?P<opts>(?:\s*(?:"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')\s*,?)*)\))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<rep>[?*+])
    """,
    re.VERBOSE,
)
_STRING = re.compile(r""""(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*'""")
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'", "0": "\0"}


def _unquote(tok: str) -> str:
    body = tok[1:-1]
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)


def _class_chars(pattern: str) -> tuple[str, ...]:
    rx = re.compile(pattern)
    return tuple(c for c in map(chr, range(256)) if rx.fullmatch(c))


def _tokens(line: str, lineno: int) -> list[tuple[str, re.Match]]:
    out = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m:
            raise GrammarError(f"line {lineno}: unexpected text {line[pos:pos + 10]!r}")
        pos = m.end()
        if m.lastgroup in ("ws", "comment"):
            continue
        out.append((m.lastgroup, m))
    return out


def _symbol(kind: str, m: re.Match, lineno: int) -> Symbol:
    if kind == "string":
        return Literal(_unquote(m.group()))
    if kind == "int":
        lo, hi = int(m.group("lo")), int(m.group("hi"))
        if lo > hi:
            raise GrammarError(f"line {lineno}: empty range int({lo},{hi})")
        return IntRange(lo, hi)
    if kind == "cls":
        pattern = m.group("pattern")
        try:
            chars = _class_chars(pattern)
        except re.error as e:
            raise GrammarError(f"line {lineno}: bad character class {pattern}: {e}") from None
        if not chars:
            raise GrammarError(f"line {lineno}: character class {pattern} matches nothing")
        return CharClass(pattern, chars)
    if kind == "oneof":
        opts = tuple(_unquote(s) for s in _STRING.findall(m.group("opts")))
        if not opts:
            raise GrammarError(f"line {lineno}: oneof() needs at least one option")
        return OneOf(opts)
    return Ref(m.group())


def _alternatives(tokens: list[tuple[str, re.Match]], lineno: int) -> list[Production]:
    alts: list[list[Item]] = [[]]
    for kind, m in tokens:
        if kind == "bar":
            alts.append([])
        elif kind == "rep":
            if not alts[-1] or alts[-1][-1].rep:
                raise GrammarError(f"line {lineno}: misplaced {m.group()!r}")
            alts[-1][-1] = Item(alts[-1][-1].symbol, m.group())
        elif kind == "arrow":
            raise GrammarError(f"line {lineno}: unexpected '->'")
        else:
            alts[-1].append(Item(_symbol(kind, m, lineno)))
    return [tuple(a) for a in alts]


def parse_grammar(text: str) -> GrammarSpec:
    start = None
    rules: dict[str, list[Production]] = {}
    last = None
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = _tokens(line, lineno)
        if not toks:
            continue
        kind0, m0 = toks[0]
        if kind0 == "ident" and m0.group() == "start" and len(toks) == 2 and toks[1][0] == "ident":
            start = toks[1][1].group()
        elif kind0 == "ident" and len(toks) >= 2 and toks[1][0] == "arrow":
            last = m0.group()
            rules.setdefault(last, []).extend(_alternatives(toks[2:], lineno))
        elif kind0 == "bar":
            if last is None:
                raise GrammarError(f"line {lineno}: continuation without a rule")
            rules[last].extend(_alternatives(toks, lineno)[1:])
        else:
            raise GrammarError(f"line {lineno}: expected 'start <Name>' or '<Name> -> ...'")
    if start is None:
        raise GrammarError("missing start declaration")
    return GrammarSpec(start, rules)


def load_grammar(path: str | Path) -> GrammarSpec:
    return parse_grammar(Path(path).read_text(encoding="utf-8"))


def check_grammar(spec: GrammarSpec) -> None:
    if spec.start not in spec.rules:
        raise GrammarError(f"undefined nonterminal {spec.start}")
    for name, alts in spec.rules.items():
        for alt in alts:
            for item in alt:
                if isinstance(item.symbol, Ref) and item.symbol.name not in spec.rules:
                    raise GrammarError(f"undefined nonterminal {item.symbol.name}")
    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for name, alts in spec.rules.items():
            if name in productive:
                continue
            for alt in alts:
                if all(it.rep in ("?", "*") or not isinstance(it.symbol, Ref) or it.symbol.name in productive
                       for it in alt):
                    productive.add(name)
                    changed = True
                    break
    for name in spec.rules:
        if name not in productive:
            raise GrammarError(f"unproductive nonterminal {name}")


def _depth_costs(rules: dict[str, list[Production]]) -> tuple[dict[str, list[int]], dict[str, int]]:
    """Smallest tree depth derivable from each production and nonterminal."""
    inf = float("inf")
    best: dict[str, float] = dict.fromkeys(rules, inf)

    def alt_cost(alt: Production) -> float:
        need = [best[it.symbol.name] for it in alt if isinstance(it.symbol, Ref) and it.rep in ("", "+")]
        return 1 + max(need, default=0)

    changed = True
    while changed:
        changed = False
        for name, alts in rules.items():
            c = min(alt_cost(a) for a in alts)
            if c < best[name]:
                best[name] = c
                changed = True
    alt_depth = {name: [int(alt_cost(a)) for a in alts] for name, alts in rules.items()}
    return alt_depth, {n: int(c) for n, c in best.items()}


# --------------------------------------------------------------------------
# Rendering, generation, conformance


def render(tree: Node) -> str:
    parts: list[str] = []
    stack: list[Union[Node, Leaf]] = [tree]
    while stack:
        el = stack.pop()
        if isinstance(el, Leaf):
            parts.append(el.value)
        else:
            for slot in reversed(el.slots):
                stack.extend(reversed(slot))
    return "".join(parts)


def depth(tree: Node) -> int:
    return 1 + max((depth(el) for slot in tree.slots for el in slot if isinstance(el, Node)), default=0)


def _fits(spec: GrammarSpec, sym: Symbol, budget: int) -> bool:
    return not isinstance(sym, Ref) or spec.min_depth[sym.name] <= budget


def _draw_terminal(sym: Symbol, rng: random.Random) -> str:
    if isinstance(sym, Literal):
        return sym.text
    if isinstance(sym, IntRange):
        return str(rng.randint(sym.lo, sym.hi))
    if isinstance(sym, CharClass):
        return rng.choice(sym.chars)
    return rng.choice(sym.options)


def _gen(spec: GrammarSpec, name: str, budget: int, config: MutatorConfig, rng: random.Random) -> Node:
    costs = spec.alt_depth[name]
    fits = [i for i, c in enumerate(costs) if c <= budget]
    if not fits:
        fits = [min(range(len(costs)), key=costs.__getitem__)]
    alt = rng.choice(fits)
    slots = []
    for item in spec.rules[name][alt]:
        ok = _fits(spec, item.symbol, budget - 1)
        if item.rep == "":
            count = 1
        elif item.rep == "?":
            count = int(ok and rng.random() < 0.5)
        elif item.rep == "*":
            count = rng.randint(0, config.max_repeat) if ok else 0
        else:
            count = rng.randint(1, config.max_repeat) if ok else 1
        slots.append(tuple(_gen_element(spec, item.symbol, budget - 1, config, rng) for _ in range(count)))
    return Node(name, alt, tuple(slots))


def _gen_element(spec, sym, budget, config, rng):
    if isinstance(sym, Ref):
        return _gen(spec, sym.name, budget, config, rng)
    return Leaf(_draw_terminal(sym, rng))


def generate(spec: GrammarSpec, config: MutatorConfig | None = None, rng: random.Random | None = None,
             symbol: str | None = None) -> Node:
    """Random derivation of at most ``config.max_depth`` levels (or the
    symbol's minimum depth, if that is larger)."""
    config = config or MutatorConfig()
    rng = rng or random.Random()
    return _gen(spec, symbol or spec.start, config.max_depth, config, rng)


def _terminal_ok(sym: Symbol, value: str) -> bool:
    if isinstance(sym, Literal):
        return value == sym.text
    if isinstance(sym, IntRange):
        return re.fullmatch(r"-?\d+", value) is not None and str(int(value)) == value and sym.lo <= int(value) <= sym.hi
    if isinstance(sym, CharClass):
        return value in sym.chars
    return value in sym.options


def conforms(tree: Node, spec: GrammarSpec) -> bool:
    """Structural check that ``tree`` is a derivation under ``spec``."""
    alts = spec.rules.get(tree.symbol)
    if alts is None or not 0 <= tree.alt < len(alts):
        return False
    alt = alts[tree.alt]
    if len(alt) != len(tree.slots):
        return False
    for item, slot in zip(alt, tree.slots):
        n = len(slot)
        if (item.rep == "" and n != 1) or (item.rep == "?" and n > 1) or (item.rep == "+" and n < 1):
            return False
        for el in slot:
            if isinstance(item.symbol, Ref):
                if not isinstance(el, Node) or el.symbol != item.symbol.name or not conforms(el, spec):
                    return False
            elif not isinstance(el, Leaf) or not _terminal_ok(item.symbol, el.value):
                return False
    return True


# --------------------------------------------------------------------------
# Parsing


_DIGITS = re.compile(r"-?\d+")


class _Parser:
    """Memoised backtracking recogniser keeping one derivation per span.

    Left-recursive re-entry at the same position is cut, so such grammars
    are only partially supported.
    """

    def __init__(self, spec: GrammarSpec, text: str, budget: int):
        self.spec = spec
        self.text = text
        self.budget = budget
        self.steps = 0
        self.farthest = 0
        self.memo: dict[tuple[str, int], dict[int, Node]] = {}
        self.active: set[tuple[str, int]] = set()

    def _tick(self, pos: int) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise ParseBudgetExceeded("parse step budget exhausted", pos)

    def nonterminal(self, name: str, pos: int) -> dict[int, Node]:
        key = (name, pos)
        if key in self.memo:
            return self.memo[key]
        if key in self.active:
            return {}
        self._tick(pos)
        self.active.add(key)
        results: dict[int, Node] = {}
        for i, alt in enumerate(self.spec.rules[name]):
            for end, slots in self.sequence(alt, pos).items():
                results.setdefault(end, Node(name, i, slots))
        self.active.discard(key)
        self.memo[key] = results
        return results

    def sequence(self, alt: Production, pos: int) -> dict[int, tuple]:
        states: dict[int, tuple] = {pos: ()}
        for item in alt:
            nxt: dict[int, tuple] = {}
            for p, slots in states.items():
                for end, slot in self.slot(item, p).items():
                    nxt.setdefault(end, slots + (slot,))
            states = nxt
            if not states:
                break
        return states

    def slot(self, item: Item, pos: int) -> dict[int, tuple]:
        if item.rep == "":
            return {e: (el,) for e, el in self.symbol(item.symbol, pos).items()}
        if item.rep == "?":
            out = {e: (el,) for e, el in self.symbol(item.symbol, pos).items()}
            out.setdefault(pos, ())
            return out
        out: dict[int, tuple] = {pos: ()} if item.rep == "*" else {}
        frontier = {e: (el,) for e, el in self.symbol(item.symbol, pos).items()}
        for e, elems in frontier.items():
            out.setdefault(e, elems)
        while frontier:
            nxt = {}
            for p, elems in frontier.items():
                for e, el in self.symbol(item.symbol, p).items():
                    if e > p and e not in out:
                        out[e] = nxt[e] = elems + (el,)
            frontier = nxt
        return out

    def symbol(self, sym: Symbol, pos: int) -> dict[int, Union[Node, Leaf]]:
        if isinstance(sym, Ref):
            return self.nonterminal(sym.name, pos)
        self._tick(pos)
        text = self.text
        out: dict[int, Union[Node, Leaf]] = {}
        if isinstance(sym, Literal):
            if text.startswith(sym.text, pos):
                out[pos + len(sym.text)] = Leaf(sym.text)
        elif isinstance(sym, OneOf):
            for opt in sym.options:
                if text.startswith(opt, pos):
                    out.setdefault(pos + len(opt), Leaf(opt))
        elif isinstance(sym, CharClass):
            if pos < len(text) and text[pos] in sym.chars:
                out[pos + 1] = Leaf(text[pos])
        else:
            m = _DIGITS.match(text, pos)
            if m:
                for end in range(pos + 1, m.end() + 1):
                    s = text[pos:end]
                    if s != "-" and _terminal_ok(sym, s):
                        out[end] = Leaf(s)
        if out:
            self.farthest = max(self.farthest, max(out))
        return out


def parse(text: str, spec: GrammarSpec, budget: int = 200_000) -> Node:
    p = _Parser(spec, text, budget)
    try:
        results = p.nonterminal(spec.start, 0)
    except RecursionError:
        raise ParseError("input nests too deeply", p.farthest) from None
    if len(text) not in results:
        raise ParseError(f"text is not derivable from {spec.start}", p.farthest)
    return results[len(text)]


# --------------------------------------------------------------------------
# Structured mutation

Path_ = tuple[tuple[int, int], ...]


def _walk(node: Node, path: Path_ = (), level: int = 1) -> Iterator[tuple[Path_, Node, int]]:
    yield path, node, level
    for si, slot in enumerate(node.slots):
        for ei, el in enumerate(slot):
            if isinstance(el, Node):
                yield from _walk(el, path + ((si, ei),), level + 1)


def _rebuild(node: Node, path: Path_, fn: Callable[[Node], Node]) -> Node:
    if not path:
        return fn(node)
    (si, ei), rest = path[0], path[1:]
    slot = list(node.slots[si])
    slot[ei] = _rebuild(slot[ei], rest, fn)
    slots = list(node.slots)
    slots[si] = tuple(slot)
    return Node(node.symbol, node.alt, tuple(slots))


def _with_slot(node: Node, si: int, slot: list) -> Node:
    slots = list(node.slots)
    slots[si] = tuple(slot)
    return Node(node.symbol, node.alt, tuple(slots))


class _Mutator:
    def __init__(self, spec: GrammarSpec, config: MutatorConfig, rng: random.Random):
        self.spec = spec
        self.config = config
        self.rng = rng

    def items(self, node: Node) -> Production:
        return self.spec.rules[node.symbol][node.alt]

    def replace_subtree(self, tree: Node) -> Node | None:
        path, node, level = self.rng.choice(list(_walk(tree)))
        budget = max(self.config.max_depth - level + 1, 1)
        return _rebuild(tree, path, lambda n: _gen(self.spec, n.symbol, budget, self.config, self.rng))

    def delete_optional(self, tree: Node) -> Node | None:
        cands = []
        for path, node, _ in _walk(tree):
            for si, item in enumerate(self.items(node)):
                n = len(node.slots[si])
                if (item.rep in ("?", "*") and n >= 1) or (item.rep == "+" and n >= 2):
                    cands.append((path, si))
        if not cands:
            return None
        path, si = self.rng.choice(cands)

        def drop(n: Node) -> Node:
            slot = list(n.slots[si])
            del slot[self.rng.randrange(len(slot))]
            return _with_slot(n, si, slot)

        return _rebuild(tree, path, drop)

    def duplicate_repeated(self, tree: Node) -> Node | None:
        cands = []
        for path, node, _ in _walk(tree):
            for si, item in enumerate(self.items(node)):
                if item.rep in ("*", "+") and 1 <= len(node.slots[si]) < self.config.max_repeat:
                    cands.append((path, si))
        if not cands:
            return None
        path, si = self.rng.choice(cands)

        def dup(n: Node) -> Node:
            slot = list(n.slots[si])
            el = self.rng.choice(slot)
            slot.insert(self.rng.randint(0, len(slot)), el)
            return _with_slot(n, si, slot)

        return _rebuild(tree, path, dup)

    def mutate_terminal(self, tree: Node) -> Node | None:
        cands = []
        for path, node, _ in _walk(tree):
            for si, item in enumerate(self.items(node)):
                sym = item.symbol
                if isinstance(sym, (Ref, Literal)):
                    continue
                if isinstance(sym, IntRange) and sym.lo == sym.hi:
                    continue
                if isinstance(sym, CharClass) and len(sym.chars) < 2:
                    continue
                if isinstance(sym, OneOf) and len(set(sym.options)) < 2:
                    continue
                cands.extend((path, si, ei, sym) for ei in range(len(node.slots[si])))
        if not cands:
            return None
        path, si, ei, sym = self.rng.choice(cands)

        def redraw(n: Node) -> Node:
            slot = list(n.slots[si])
            old = slot[ei].value
            new = _draw_terminal(sym, self.rng)
            while new == old:
                new = _draw_terminal(sym, self.rng)
            slot[ei] = Leaf(new)
            return _with_slot(n, si, slot)

        return _rebuild(tree, path, redraw)

    def swap_siblings(self, tree: Node) -> Node | None:
        cands = []
        for path, node, _ in _walk(tree):
            positions = [(si, ei, el) for si, slot in enumerate(node.slots)
                         for ei, el in enumerate(slot) if isinstance(el, Node)]
            for i, (si, ei, a) in enumerate(positions):
                for sj, ej, b in positions[i + 1:]:
                    if a.symbol == b.symbol and a != b:
                        cands.append((path, (si, ei), (sj, ej)))
        if not cands:
            return None
        path, (si, ei), (sj, ej) = self.rng.choice(cands)

        def swap(n: Node) -> Node:
            slots = [list(s) for s in n.slots]
            slots[si][ei], slots[sj][ej] = slots[sj][ej], slots[si][ei]
            return Node(n.symbol, n.alt, tuple(tuple(s) for s in slots))

        return _rebuild(tree, path, swap)


def mutate(tree: Node, spec: GrammarSpec, config: MutatorConfig | None = None,
           rng: random.Random | None = None) -> Node:
    """Apply a few weighted structural edits; the input tree is left untouched."""
    config = config or MutatorConfig()
    rng = rng or random.Random()
    m = _Mutator(spec, config, rng)
    ops = [op for op in OPERATORS if config.weights.get(op, 0) > 0]
    weights = [config.weights[op] for op in ops]
    for _ in range(rng.randint(*config.mutations_per_call)):
        for _attempt in range(config.max_retries):
            op = rng.choices(ops, weights)[0]
            result = getattr(m, op)(tree)
            if result is not None:
                tree = result
                break
    return tree


# --------------------------------------------------------------------------
# Structure-blind byte mutation

_INTERESTING = (0x00, 0x01, 0x10, 0x20, 0x40, 0x7F, 0x80, 0xFF)
HAVOC_MAX_LEN = 4096


def havoc_mutate(data: bytes, rng: random.Random) -> bytes:
    """One havoc round: a stack of 1, 2, 4 or 8 random byte edits."""
    buf = bytearray(data)
    for _ in range(1 << rng.randint(0, 3)):
        op = rng.randrange(5) if buf else 4
        if op == 0:
            i = rng.randrange(len(buf))
            buf[i] ^= 1 << rng.randrange(8)
        elif op == 1:
            i = rng.randrange(len(buf))
            buf[i] = rng.choice(_INTERESTING) if rng.random() < 0.5 else rng.randrange(256)
        elif op == 2:
            n = rng.randint(1, min(len(buf), 8))
            i = rng.randrange(len(buf) - n + 1)
            del buf[i:i + n]
        elif op == 3:
            n = rng.randint(1, min(len(buf), 8))
            i = rng.randrange(len(buf) - n + 1)
            j = rng.randint(0, len(buf))
            buf[j:j] = buf[i:i + n]
        else:
            j = rng.randint(0, len(buf))
            buf[j:j] = bytes(rng.randrange(256) for _ in range(rng.randint(1, 8)))
    return bytes(buf[:HAVOC_MAX_LEN])

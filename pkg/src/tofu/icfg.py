"""Interprocedural control-flow graph: loading, indirect-call resolution,
post-dominators and the weighted search graph used for distance computation.

Graph files are plain text::

    main main
    function main signature=i32() address_taken=0 entry=main:0 exits=main:2
    block main:0
    block main:1
    block main:2
    edge main:0 main:1
    call main:1 direct=helper return=main:2

``block`` lines belong to the most recent ``function`` header.  ``edge``
lines are intra-procedural; ``call`` lines describe call sites, either with
an explicit callee list (``direct=f,g``) or a signature to be resolved
against address-taken functions (``indirect=i32(i32)``).
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

INF = math.inf

#: Synthetic node standing for "function returned"; never part of a WeightedGraph.
EXIT_SINK = "<exit>"

EDGE_KINDS = ("intra", "call", "return", "postdom")


class IcfgError(ValueError):
    pass


class GraphParseError(IcfgError):
    def __init__(self, message: str, line: int, path: str | None = None):
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}")
        self.line = line


class GraphValidationError(IcfgError):
    pass


@dataclass(frozen=True)
class FunctionDef:
    name: str
    blocks: tuple[str, ...]
    entry: str
    exits: frozenset[str]
    signature: str = "void()"
    address_taken: bool = False


@dataclass(frozen=True)
class CallSite:
    block: str
    return_site: str
    callees: tuple[str, ...] = ()
    # Signature pattern for indirect sites; None for direct calls.
    indirect: str | None = None

    @property
    def is_indirect(self) -> bool:
        return self.indirect is not None


@dataclass(frozen=True)
class IcfgEdge:
    src: str
    dst: str
    kind: str


@dataclass(frozen=True)
class Icfg:
    functions: dict[str, FunctionDef]
    intra_edges: tuple[tuple[str, str], ...]
    call_sites: tuple[CallSite, ...]
    main: str

    @property
    def edges(self) -> list[IcfgEdge]:
        """All intra, call and return edges (call/return derived from call sites)."""
        out = [IcfgEdge(s, d, "intra") for s, d in self.intra_edges]
        for site in self.call_sites:
            for callee in site.callees:
                fn = self.functions[callee]
                out.append(IcfgEdge(site.block, fn.entry, "call"))
                for x in sorted(fn.exits):
                    out.append(IcfgEdge(x, site.return_site, "return"))
        return out

    def block_owner(self) -> dict[str, str]:
        return {b: f.name for f in self.functions.values() for b in f.blocks}

    @property
    def blocks(self) -> list[str]:
        return [b for f in self.functions.values() for b in f.blocks]

    def intra_successors(self) -> dict[str, list[str]]:
        succ: dict[str, list[str]] = {b: [] for b in self.blocks}
        for s, d in self.intra_edges:
            if d not in succ[s]:
                succ[s].append(d)
        return succ

    def call_graph(self) -> dict[str, set[str]]:
        owner = self.block_owner()
        cg: dict[str, set[str]] = {name: set() for name in self.functions}
        for site in self.call_sites:
            cg[owner[site.block]].update(site.callees)
        return cg


@dataclass(frozen=True)
class TargetSpec:
    targets: frozenset[str]

    def __iter__(self):
        return iter(sorted(self.targets))

    def __len__(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class Arc:
    src: str
    dst: str
    weight: float
    kind: str


@dataclass(frozen=True)
class WeightedGraph:
    nodes: tuple[str, ...]
    arcs: tuple[Arc, ...] = field(default=())

    def arc_set(self) -> set[tuple[str, str, float, str]]:
        return {(a.src, a.dst, a.weight, a.kind) for a in self.arcs}


# --------------------------------------------------------------------------
# Loading and dumping


def _kv(tokens: Iterable[str], lineno: int, path: str | None) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise GraphParseError(f"expected key=value, got {tok!r}", lineno, path)
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _split_list(value: str) -> list[str]:
    return [v for v in value.split(",") if v]


def parse_icfg(text: str, path: str | None = None) -> Icfg:
    functions: list[dict] = []
    intra: list[tuple[str, str]] = []
    sites: list[CallSite] = []
    main: str | None = None
    current: dict | None = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "function":
            if not rest:
                raise GraphParseError("function without a name", lineno, path)
            name, attrs = rest[0], _kv(rest[1:], lineno, path)
            unknown = set(attrs) - {"signature", "address_taken", "entry", "exits"}
            if unknown:
                raise GraphParseError(f"unknown function attribute {sorted(unknown)[0]!r}", lineno, path)
            if "entry" not in attrs:
                raise GraphParseError(f"function {name} has no entry=", lineno, path)
            if attrs.get("address_taken", "0") not in ("0", "1"):
                raise GraphParseError("address_taken must be 0 or 1", lineno, path)
            current = {
                "name": name,
                "signature": attrs.get("signature", "void()"),
                "address_taken": attrs.get("address_taken", "0") == "1",
                "entry": attrs["entry"],
                "exits": _split_list(attrs.get("exits", "")),
                "blocks": [],
            }
            functions.append(current)
        elif head == "block":
            if current is None:
                raise GraphParseError("block outside of a function section", lineno, path)
            if len(rest) != 1:
                raise GraphParseError("expected: block <id>", lineno, path)
            current["blocks"].append(rest[0])
        elif head == "edge":
            if len(rest) != 2:
                raise GraphParseError("expected: edge <src> <dst>", lineno, path)
            intra.append((rest[0], rest[1]))
        elif head == "call":
            if len(rest) < 2:
                raise GraphParseError("expected: call <block> direct=...|indirect=... return=<block>", lineno, path)
            attrs = _kv(rest[1:], lineno, path)
            if "return" not in attrs:
                raise GraphParseError("call without return=", lineno, path)
            if ("direct" in attrs) == ("indirect" in attrs):
                raise GraphParseError("call needs exactly one of direct= or indirect=", lineno, path)
            if "direct" in attrs:
                site = CallSite(rest[0], attrs["return"], tuple(_split_list(attrs["direct"])))
            else:
                site = CallSite(rest[0], attrs["return"], (), attrs["indirect"])
            sites.append(site)
        elif head == "main":
            if len(rest) != 1:
                raise GraphParseError("expected: main <function>", lineno, path)
            main = rest[0]
        else:
            raise GraphParseError(f"unknown directive {head!r}", lineno, path)

    if main is None:
        raise GraphValidationError("missing main declaration")
    funcs = {}
    for f in functions:
        if f["name"] in funcs:
            raise GraphValidationError(f"duplicate function {f['name']}")
        funcs[f["name"]] = FunctionDef(
            f["name"], tuple(f["blocks"]), f["entry"], frozenset(f["exits"]),
            f["signature"], f["address_taken"],
        )
    icfg = Icfg(funcs, tuple(intra), tuple(sites), main)
    validate(icfg)
    return icfg


def load_icfg(path: str | Path) -> Icfg:
    path = Path(path)
    return parse_icfg(path.read_text(encoding="utf-8"), str(path))


def validate(icfg: Icfg) -> None:
    """Raise GraphValidationError naming the first violated invariant."""
    if icfg.main not in icfg.functions:
        raise GraphValidationError(f"missing main function {icfg.main}")
    owner: dict[str, str] = {}
    for f in icfg.functions.values():
        if not f.blocks:
            raise GraphValidationError(f"function {f.name} has no blocks")
        for b in f.blocks:
            if not b or any(c.isspace() for c in b):
                raise GraphValidationError(f"invalid block id {b!r}")
            if b in owner:
                raise GraphValidationError(f"duplicate block id {b}")
            owner[b] = f.name
        if f.entry not in f.blocks:
            raise GraphValidationError(f"entry {f.entry} is not a block of {f.name}")
        for x in sorted(f.exits):
            if x not in f.blocks:
                raise GraphValidationError(f"exit {x} is not a block of {f.name}")
    for s, d in icfg.intra_edges:
        for b in (s, d):
            if b not in owner:
                raise GraphValidationError(f"unknown block {b}")
        if owner[s] != owner[d]:
            raise GraphValidationError(f"intra edge {s} -> {d} crosses functions")
    seen_sites = set()
    for site in icfg.call_sites:
        for b in (site.block, site.return_site):
            if b not in owner:
                raise GraphValidationError(f"unknown block {b}")
        if site.block in seen_sites:
            raise GraphValidationError(f"more than one call site at {site.block}")
        seen_sites.add(site.block)
        if owner[site.block] != owner[site.return_site]:
            raise GraphValidationError(f"return site {site.return_site} not in the caller of {site.block}")
        for callee in site.callees:
            if callee not in icfg.functions:
                raise GraphValidationError(f"unknown function {callee}")


def dump_icfg(icfg: Icfg) -> str:
    lines = [f"main {icfg.main}"]
    for f in icfg.functions.values():
        lines.append(
            f"function {f.name} signature={f.signature} address_taken={int(f.address_taken)} "
            f"entry={f.entry} exits={','.join(sorted(f.exits))}"
        )
        lines.extend(f"block {b}" for b in f.blocks)
    lines.extend(f"edge {s} {d}" for s, d in icfg.intra_edges)
    for site in icfg.call_sites:
        target = f"indirect={site.indirect}" if site.is_indirect else f"direct={','.join(site.callees)}"
        lines.append(f"call {site.block} {target} return={site.return_site}")
    return "\n".join(lines) + "\n"


def load_targets(path: str | Path, icfg: Icfg | None = None) -> TargetSpec:
    targets = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            targets.append(line)
    spec = TargetSpec(frozenset(targets))
    if not spec.targets:
        raise GraphValidationError(f"{path}: no targets")
    if icfg is not None:
        check_targets(icfg, spec)
    return spec


def check_targets(icfg: Icfg, targets: TargetSpec) -> None:
    known = set(icfg.blocks)
    for t in sorted(targets.targets):
        if t not in known:
            raise GraphValidationError(f"unknown target block {t}")


# --------------------------------------------------------------------------
# Analyses


def resolve_indirect_calls(icfg: Icfg) -> Icfg:
    """Point each indirect site at the address-taken functions whose
    signature matches the site's pattern exactly."""
    sites = []
    for site in icfg.call_sites:
        if site.is_indirect:
            callees = tuple(sorted(
                f.name for f in icfg.functions.values()
                if f.address_taken and f.signature == site.indirect
            ))
            site = replace(site, callees=callees)
        sites.append(site)
    return replace(icfg, call_sites=tuple(sites))


def local_cfg(icfg: Icfg, function: str) -> dict[str, list[str]]:
    """Successor lists of one function's CFG.

    A call block falls through to its return site here, so the callee body is
    summarised away; exits additionally flow into EXIT_SINK.
    """
    fn = icfg.functions[function]
    succ: dict[str, list[str]] = {b: [] for b in fn.blocks}
    members = set(fn.blocks)
    for s, d in icfg.intra_edges:
        if s in members and d not in succ[s]:
            succ[s].append(d)
    for site in icfg.call_sites:
        if site.block in members and site.return_site not in succ[site.block]:
            succ[site.block].append(site.return_site)
    for x in fn.exits:
        succ[x].append(EXIT_SINK)
    return succ


def immediate_post_dominators(succ: dict[str, list[str]]) -> dict[str, str]:
    """Immediate post-dominators of a CFG whose exits lead into EXIT_SINK.

    Iterative dominator algorithm (Cooper, Harvey and Kennedy) run on the
    reversed graph rooted at the sink.  Blocks that cannot reach the sink
    are left out of the result.
    """
    preds: dict[str, list[str]] = defaultdict(list)  # predecessors in the CFG
    for b, ss in succ.items():
        for s in ss:
            preds[s].append(b)

    # Post-order of the reversed graph, iteratively to stay clear of recursion limits.
    order: list[str] = []
    visited = {EXIT_SINK}
    stack = [(EXIT_SINK, iter(preds[EXIT_SINK]))]
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            order.append(node)
        elif nxt not in visited:
            visited.add(nxt)
            stack.append((nxt, iter(preds[nxt])))
    index = {n: i for i, n in enumerate(order)}  # sink has the highest index

    ipdom: dict[str, str] = {EXIT_SINK: EXIT_SINK}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] < index[b]:
                a = ipdom[a]
            while index[b] < index[a]:
                b = ipdom[b]
        return a

    changed = True
    while changed:
        changed = False
        for node in reversed(order):
            if node == EXIT_SINK:
                continue
            new = None
            for s in succ.get(node, ()):
                if s in ipdom:
                    new = s if new is None else intersect(s, new)
            if new is not None and ipdom.get(node) != new:
                ipdom[node] = new
                changed = True
    del ipdom[EXIT_SINK]
    return ipdom


def compute_immediate_post_dominators(icfg: Icfg, function: str) -> dict[str, str]:
    return immediate_post_dominators(local_cfg(icfg, function))


def _closure(graph: dict[str, set[str]], roots: Iterable[str]) -> set[str]:
    seen = set(roots)
    work = deque(seen)
    while work:
        n = work.popleft()
        for m in graph.get(n, ()):
            if m not in seen:
                seen.add(m)
                work.append(m)
    return seen


def relevant_call_edges(icfg: Icfg, targets: TargetSpec) -> tuple[set[str], set[str]]:
    """Return (functions reachable from main, functions that can reach a
    target-containing function) in the call graph."""
    cg = icfg.call_graph()
    owner = icfg.block_owner()
    from_main = _closure(cg, [icfg.main])
    reverse: dict[str, set[str]] = defaultdict(set)
    for f, callees in cg.items():
        for g in callees:
            reverse[g].add(f)
    to_target = _closure(reverse, {owner[t] for t in targets.targets})
    return from_main, to_target


def build_weighted_graph(icfg: Icfg, targets: TargetSpec) -> WeightedGraph:
    """Label ICFG edges with 0/1/INF lengths and add post-dominator shortcuts.

    Expects indirect calls to be resolved already.
    """
    check_targets(icfg, targets)
    owner = icfg.block_owner()
    arcs: list[Arc] = []

    succ = icfg.intra_successors()
    for b, ss in succ.items():
        w = 1 if len(ss) > 1 else 0
        arcs.extend(Arc(b, d, w, "intra") for d in ss)

    for name in icfg.functions:
        for b, p in compute_immediate_post_dominators(icfg, name).items():
            if p != EXIT_SINK:
                arcs.append(Arc(b, p, 0, "postdom"))

    from_main, to_target = relevant_call_edges(icfg, targets)
    for site in icfg.call_sites:
        caller = owner[site.block]
        branching = 1 if len(site.callees) > 1 else 0
        for callee in site.callees:
            fn = icfg.functions[callee]
            relevant = callee in to_target and caller in from_main
            arcs.append(Arc(site.block, fn.entry, branching if relevant else INF, "call"))
            arcs.extend(Arc(x, site.return_site, 0, "return") for x in sorted(fn.exits))

    arcs = sorted(set(arcs), key=lambda a: (a.src, a.dst, a.kind, a.weight))
    return WeightedGraph(tuple(icfg.blocks), tuple(arcs))

"""Independent oracles and random graph generators shared by the tests.

Nothing here imports the algorithms under test: the oracles re-derive
distances and post-dominators from first principles.
"""

from __future__ import annotations

import math
import random
from pathlib import Path

from tofu.icfg import EXIT_SINK, CallSite, FunctionDef, Icfg, TargetSpec, WeightedGraph

HERE = Path(__file__).parent
INF = math.inf


def random_icfg(rng: random.Random, max_functions: int = 6, max_blocks: int = 60) -> tuple[Icfg, TargetSpec]:
    """Random well-formed ICFG with direct, multi-callee and indirect calls."""
    nfun = rng.randint(1, max_functions)
    names = ["main"] + [f"f{i}" for i in range(1, nfun)]
    budget = max_blocks
    functions, intra, sites = {}, [], []
    signatures = ["i32()", "void(ptr)"]
    for k, name in enumerate(names):
        remaining = len(names) - k - 1
        n = rng.randint(1, max(1, min(12, budget - remaining)))
        budget -= n
        blocks = tuple(f"{name}:{i}" for i in range(n))
        exits = {blocks[-1]} | {b for b in blocks[:-1] if rng.random() < 0.1}
        for i, b in enumerate(blocks[:-1]):
            fwd = blocks[i + 1:]
            intra.append((b, rng.choice(fwd[:2])))
            if rng.random() < 0.45:
                intra.append((b, rng.choice(blocks)))  # may be a back edge or self loop
        functions[name] = FunctionDef(
            name, blocks, blocks[0], frozenset(exits),
            rng.choice(signatures), rng.random() < 0.4,
        )
    for name, fn in functions.items():
        for i, b in enumerate(fn.blocks[:-1]):
            if rng.random() < 0.3:
                ret = fn.blocks[i + 1]
                if rng.random() < 0.2:
                    sites.append(CallSite(b, ret, (), rng.choice(signatures)))
                else:
                    callees = tuple(sorted(rng.sample(names, min(len(names), rng.choice([1, 1, 1, 2])))))
                    sites.append(CallSite(b, ret, callees))
    icfg = Icfg(functions, tuple(dict.fromkeys(intra)), tuple(sites), "main")
    all_blocks = [b for f in functions.values() for b in f.blocks]
    targets = TargetSpec(frozenset(rng.sample(all_blocks, rng.randint(1, min(3, len(all_blocks))))))
    return icfg, targets


def bellman_ford(graph: WeightedGraph, target: str) -> dict[str, float]:
    """Distance from every node to ``target`` by plain edge relaxation."""
    dist = {n: INF for n in graph.nodes}
    dist[target] = 0
    for _ in range(len(graph.nodes)):
        changed = False
        for a in graph.arcs:
            cand = a.weight + dist[a.dst]
            if cand < dist[a.src]:
                dist[a.src] = cand
                changed = True
        if not changed:
            break
    return dist


def random_cfg(rng: random.Random, max_blocks: int = 30) -> dict[str, list[str]]:
    """Single-function CFG whose exits flow into EXIT_SINK."""
    n = rng.randint(1, max_blocks)
    blocks = [f"b{i}" for i in range(n)]
    succ: dict[str, list[str]] = {b: [] for b in blocks}
    back = 0
    for i, b in enumerate(blocks):
        if i == n - 1 or rng.random() < 0.08:
            succ[b].append(EXIT_SINK)
        if i < n - 1:
            succ[b].append(blocks[min(n - 1, i + rng.randint(1, 3))])
            r = rng.random()
            if r < 0.35:
                succ[b].append(blocks[rng.randrange(i + 1, n)])
            elif r < 0.45 and back < 3:
                succ[b].append(blocks[rng.randrange(0, i + 1)])
                back += 1
        succ[b] = list(dict.fromkeys(succ[b]))
    return succ


def ipdom_by_paths(succ: dict[str, list[str]]) -> dict[str, str]:
    """Immediate post-dominators from the definition: intersect the node
    sets of every simple path to the sink (any path shrinks to a simple one)."""

    def paths_from(b: str):
        stack = [(b, [b], {b})]
        while stack:
            node, path, seen = stack.pop()
            if node == EXIT_SINK:
                yield path
                continue
            for s in succ.get(node, ()):
                if s not in seen:
                    stack.append((s, path + [s], seen | {s}))

    pdom: dict[str, set[str]] = {}
    for b in succ:
        common = None
        for p in paths_from(b):
            common = set(p) if common is None else common & set(p)
        if common is not None:
            pdom[b] = common - {b}  # strict post-dominators
    pdom[EXIT_SINK] = set()
    out = {}
    for b, strict in pdom.items():
        if b == EXIT_SINK:
            continue
        # The immediate one is post-dominated by every other strict post-dominator.
        (ip,) = [p for p in strict if strict - {p} <= pdom[p]]
        out[b] = ip
    return out

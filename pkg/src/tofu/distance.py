"""Per-target branch-choice distances over the weighted ICFG, and the
on-disk distance file format (``<block> <int|INF>`` per line)."""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .icfg import INF, TargetSpec, WeightedGraph

INF_TOKEN = "INF"
SUFFIX = ".dist"


class DistanceFileError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceMap:
    target: str
    dist: Mapping[str, float]

    def __getitem__(self, block: str) -> float:
        return self.dist.get(block, INF)

    def __contains__(self, block: str) -> bool:
        return block in self.dist

    def finite(self) -> dict[str, int]:
        return {b: d for b, d in self.dist.items() if d != INF}


def shortest_distances_to(graph: WeightedGraph, target: str) -> dict[str, float]:
    """Dijkstra on the reversed graph; arcs of infinite length are dropped."""
    rev: dict[str, list[tuple[str, float]]] = defaultdict(list)
    for a in graph.arcs:
        if a.weight != INF:
            rev[a.dst].append((a.src, a.weight))
    dist: dict[str, float] = {n: INF for n in graph.nodes}
    dist[target] = 0
    heap = [(0, target)]
    done = set()
    while heap:
        d, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        for m, w in rev[n]:
            nd = d + w
            if nd < dist.get(m, INF):
                dist[m] = nd
                heapq.heappush(heap, (nd, m))
    return dist


def compute_distances(graph: WeightedGraph, targets: TargetSpec) -> dict[str, DistanceMap]:
    return {t: DistanceMap(t, shortest_distances_to(graph, t)) for t in targets}


def sanitize(block: str) -> str:
    return block.replace(":", "__")


def _fmt(d: float) -> str:
    return INF_TOKEN if d == INF else str(int(d))


def format_distance_map(m: DistanceMap) -> str:
    # Target first so that readers can recover it without reversing the filename.
    lines = [f"{m.target} {_fmt(m[m.target])}"]
    lines += [f"{b} {_fmt(m.dist[b])}" for b in sorted(m.dist) if b != m.target]
    return "\n".join(lines) + "\n"


def parse_distance_map(text: str, path: str = "<string>") -> DistanceMap:
    dist: dict[str, float] = {}
    target = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DistanceFileError(f"{path}:{lineno}: expected '<block> <int|INF>'")
        block, value = parts
        if value == INF_TOKEN:
            d: float = INF
        else:
            try:
                d = int(value)
            except ValueError:
                raise DistanceFileError(f"{path}:{lineno}: bad distance {value!r}") from None
            if d < 0:
                raise DistanceFileError(f"{path}:{lineno}: negative distance")
        if target is None:
            target = block
        dist[block] = d
    if target is None:
        raise DistanceFileError(f"{path}: empty distance file")
    if dist[target] != 0:
        raise DistanceFileError(f"{path}: target {target} must have distance 0")
    return DistanceMap(target, dist)


def write_distance_files(maps: Mapping[str, DistanceMap], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DistanceFileError(f"{directory}: {e.strerror}") from e
    written = []
    for target in sorted(maps):
        path = directory / (sanitize(target) + SUFFIX)
        try:
            path.write_text(format_distance_map(maps[target]), encoding="utf-8")
        except OSError as e:
            raise DistanceFileError(f"{path}: {e.strerror}") from e
        written.append(path)
    return written


def read_distance_files(directory: str | Path) -> dict[str, DistanceMap]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DistanceFileError(f"{directory}: not a directory")
    maps = {}
    for path in sorted(directory.glob("*" + SUFFIX)):
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise DistanceFileError(f"{path}: {e.strerror}") from e
        m = parse_distance_map(text, str(path))
        maps[m.target] = m
    return maps


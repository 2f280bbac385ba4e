"""Seed priority queue, coverage-set diversity suppression and target
bookkeeping.

Lower scores are better: a score is the number of branch choices a mutant
still has to get right before it reaches some uncovered target.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from .distance import DistanceMap
from .icfg import INF

REINSERT_FACTOR = 1.2
ZERO_SCORE_REINSERT = 0.5


class QueueExhausted(Exception):
    """Raised by select_next on an empty queue."""


@dataclass(frozen=True)
class Seed:
    input: Any
    coverage: frozenset[str]
    score: float
    insert_seq: int = -1
    # Score before any reinsertion and the number of reinsertions since, so
    # the live score is exactly base * 1.2**bumps rather than a product chain.
    base: float | None = None
    bumps: int = 0


@dataclass
class TargetLedger:
    all: frozenset[str]
    covered: set[str] = field(default_factory=set)

    @property
    def uncovered(self) -> set[str]:
        return set(self.all) - self.covered

    @property
    def done(self) -> bool:
        return self.covered >= self.all


def coverage_key(coverage: Iterable[str]) -> str:
    h = hashlib.sha1()
    for b in sorted(coverage):
        h.update(b.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class CoverageDictionary:
    counts: dict[str, int] = field(default_factory=dict)

    def lookup(self, coverage: Iterable[str]) -> int:
        return self.counts.get(coverage_key(coverage), 0)

    def increment(self, coverage: Iterable[str]) -> None:
        key = coverage_key(coverage)
        self.counts[key] = self.counts.get(key, 0) + 1


class SeedQueue:
    """Min-priority queue ordered by (score, insert_seq)."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, Seed]] = []
        self._seq = 0
        self.pops = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, seed: Seed) -> Seed:
        seed = replace(seed, insert_seq=self._seq)
        self._seq += 1
        heapq.heappush(self._heap, (seed.score, seed.insert_seq, seed))
        return seed

    def pop(self) -> Seed:
        if not self._heap:
            raise QueueExhausted("seed queue is empty")
        self.pops += 1
        return heapq.heappop(self._heap)[2]

    def seeds(self) -> list[Seed]:
        """Live seeds in extraction order (does not modify the queue)."""
        return [entry[2] for entry in sorted(self._heap)]

    def select_next(self) -> Seed:
        seed = self.pop()
        if seed.score > 0:
            base = seed.score if seed.base is None else seed.base
            bumps = seed.bumps + 1
            self.push(replace(seed, score=base * REINSERT_FACTOR ** bumps, base=base, bumps=bumps))
        else:
            self.push(replace(seed, score=ZERO_SCORE_REINSERT, base=ZERO_SCORE_REINSERT, bumps=0))
        return seed


def select_next(queue: SeedQueue) -> Seed:
    return queue.select_next()


def score_trace(coverage: Iterable[str], maps: Mapping[str, DistanceMap], ledger: TargetLedger) -> float:
    """Min over uncovered targets of the min distance over covered blocks."""
    coverage = list(coverage)
    best = INF
    for t in ledger.uncovered:
        m = maps.get(t)
        if m is None:
            continue
        for b in coverage:
            d = m[b]
            if d < best:
                best = d
                if best == 0:
                    return 0
    return best


def try_insert(seed: Seed, queue: SeedQueue, dictionary: CoverageDictionary, rng: random.Random) -> bool:
    """Insert with probability 1/(n+1), n = prior inserts of the same coverage set."""
    if seed.score == INF:
        return False
    n = dictionary.lookup(seed.coverage)
    if rng.random() >= 1.0 / (n + 1):
        return False
    dictionary.increment(seed.coverage)
    queue.push(seed)
    return True


def update_targets(coverage: Iterable[str], ledger: TargetLedger) -> set[str]:
    newly = (set(coverage) & set(ledger.all)) - ledger.covered
    ledger.covered |= newly
    return newly


def random_score(rng: random.Random) -> float:
    """Priority used when distance guidance is switched off."""
    return rng.random()

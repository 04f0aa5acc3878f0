"""Reference schedulers: a per-layer naive heuristic and a graph-distance (LMS-style) scheduler."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .graph import NetworkGraph, VariableSequence
from .scheduler import Schedule

__all__ = ["naive_schedule", "LmsConfig", "lms_schedule", "function_distances"]


class _Builder:
    """Collects actions with sort keys so list order is independent of build order."""

    def __init__(self, seq: VariableSequence):
        self.seq = seq
        n = seq.n_functions
        self.lists = {k: [[] for _ in range(n)] for k in ("swap_in", "wait_out", "reserve_out", "free")}
        self.first_occ = [{} for _ in range(n)]
        for i, (lo, hi) in enumerate(seq.fn_ranges):
            for k in range(lo, hi):
                self.first_occ[i].setdefault(seq.occurrences[k].var, k)

    def add(self, kind: str, at: int, var: str, key) -> None:
        self.lists[kind][at].append((key, var))

    def build(self) -> Schedule:
        frozen = {k: [[v for _, v in sorted(xs)] for xs in ls] for k, ls in self.lists.items()}
        return Schedule.from_lists(self.seq.function_ids, seq=self.seq, **frozen)


def naive_schedule(seq: VariableSequence) -> Schedule:
    """Swap every variable out after each use and back in one function before the next.

    Swap-outs are waited for right before the following function, so at most
    two functions' variables are scheduled resident at once. When a variable is
    reused by the very next function the swap-in cannot move earlier than that
    wait, and the round trip happens back to back.
    """
    b = _Builder(seq)
    for v in seq.variables:
        uses = seq.uses_of(v)
        b.add("swap_in", max(0, uses[0] - 1), v, b.first_occ[uses[0]][v])
        for a, nxt in zip(uses, uses[1:]):
            b.add("reserve_out", a, v, b.first_occ[a][v])
            b.add("wait_out", a + 1, v, (a, b.first_occ[a][v]))
            b.add("swap_in", max(a + 1, nxt - 1), v, b.first_occ[nxt][v])
        b.add("free", uses[-1], v, b.first_occ[uses[-1]][v])
    return b.build()


@dataclass(frozen=True)
class LmsConfig:
    swapout_threshold: int
    swapin_ahead: int
    # Swap out when the reuse distance is <= threshold instead of > threshold.
    literal_le: bool = False

    def __post_init__(self) -> None:
        if self.swapout_threshold < 0:
            raise ValueError("swapout_threshold must be >= 0")
        if self.swapin_ahead < 1:
            raise ValueError("swapin_ahead must be >= 1")


def function_distances(graph: NetworkGraph, seq: VariableSequence) -> list[list[int]]:
    """Hop distances between execution positions.

    ``d[i][j]`` (i < j) is the shortest directed path length from function i to
    function j, or ``j - i`` when no path exists.
    """
    n = seq.n_functions
    pos = {fi: p for p, fi in enumerate(seq.order)}
    succ = [[] for _ in range(n)]
    for a, b in graph.edges:
        succ[pos[a]].append(pos[b])
    d = [[0] * n for _ in range(n)]
    for s in range(n):
        hops = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for w in succ[u]:
                if w not in hops:
                    hops[w] = hops[u] + 1
                    q.append(w)
        for t in range(s + 1, n):
            d[s][t] = hops.get(t, t - s)
    return d


def _swapin_point(d: list[list[int]], lo: int, use: int, ahead: int) -> int:
    # latest k in [lo, use) at distance exactly `ahead`, else latest at >= ahead,
    # else as early as allowed
    cands = range(use - 1, lo - 1, -1)
    for k in cands:
        if d[k][use] == ahead:
            return k
    for k in cands:
        if d[k][use] >= ahead:
            return k
    return lo if lo < use else use


def lms_schedule(graph: NetworkGraph, seq: VariableSequence, config: LmsConfig) -> Schedule:
    """Distance-threshold scheduling with no memory budget.

    A variable used at f_i is swapped out when the hop distance to its next
    user exceeds ``swapout_threshold``; it is swapped back in before the
    latest f_k at distance ``swapin_ahead`` from that user. The swap-out is
    waited for at the swap-in point.
    """
    d = function_distances(graph, seq)
    b = _Builder(seq)
    for v in seq.variables:
        uses = seq.uses_of(v)
        first = uses[0]
        b.add("swap_in", _swapin_point(d, 0, first, config.swapin_ahead), v, b.first_occ[first][v])
        for a, nxt in zip(uses, uses[1:]):
            dist = d[a][nxt]
            out = dist <= config.swapout_threshold if config.literal_le else dist > config.swapout_threshold
            if not out:
                continue
            k = _swapin_point(d, a + 1, nxt, config.swapin_ahead)
            b.add("reserve_out", a, v, b.first_occ[a][v])
            b.add("wait_out", k, v, (a, b.first_occ[a][v]))
            b.add("swap_in", k, v, b.first_occ[nxt][v])
        b.add("free", uses[-1], v, b.first_occ[uses[-1]][v])
    return b.build()

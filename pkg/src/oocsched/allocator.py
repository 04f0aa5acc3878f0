"""Device memory allocator models with fragmentation accounting.

Two models share one interface (``allocate``, ``deallocate``, ``stats``):

* :class:`BestFitAllocator` - best-fit over a cache of freed regions. A miss
  carves a fresh region of exactly the requested size from the remaining
  device capacity; cached regions are split on reuse and only merge with
  neighbours from the same carve, so the cache fragments over time.
* :class:`VirtualAddressAllocator` - every request maps ``ceil(m_r / m_c)``
  fixed-size physical chunks, taken from anywhere in the pool, into one
  virtual span. Waste is internal only and bounded by one chunk per live
  allocation.
"""
from __future__ import annotations

import bisect
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from .units import MiB

__all__ = [
    "AllocatorError",
    "DeviceOOM",
    "UnknownHandle",
    "DoubleFree",
    "AllocatorStats",
    "BestFitAllocator",
    "VirtualAddressAllocator",
    "make_allocator",
    "TraceOp",
    "read_trace",
    "write_trace",
    "random_trace",
    "adversarial_trace",
    "OomEvent",
    "FragReport",
    "worst_case_external_frag",
]

DEFAULT_CHUNK_BYTES = 40 * MiB
MIN_CHUNK_BYTES = 2 * MiB


class AllocatorError(Exception):
    pass


class DeviceOOM(AllocatorError):
    def __init__(self, requested: int, free_bytes: int, function: str | None = None, variable: str | None = None):
        self.requested = requested
        self.free_bytes = free_bytes
        self.function = function
        self.variable = variable
        where = f" at {function} for {variable}" if function is not None else ""
        super().__init__(f"device OOM{where}: requested {requested} B with {free_bytes} B free")


class UnknownHandle(AllocatorError):
    pass


class DoubleFree(AllocatorError):
    pass


@dataclass(frozen=True)
class AllocatorStats:
    capacity_bytes: int
    live_requested_bytes: int = 0
    live_allocated_bytes: int = 0
    device_in_use_bytes: int = 0
    cached_bytes: int = 0
    peak_device_bytes: int = 0
    live_alloc_count: int = 0
    max_live_alloc_count: int = 0
    peak_internal_frag_bytes: int = 0

    @property
    def internal_frag_bytes(self) -> int:
        return self.live_allocated_bytes - self.live_requested_bytes

    @property
    def free_bytes(self) -> int:
        """Capacity not held by live allocations."""
        return self.capacity_bytes - self.live_allocated_bytes


class _Base:
    kind = ""

    def __init__(self, capacity_bytes: int):
        if capacity_bytes < 1:
            raise ValueError("capacity must be positive")
        self.capacity_bytes = capacity_bytes
        self._next_handle = 0
        self._freed: set[int] = set()
        self._requested: dict[int, int] = {}
        self._live_req = 0
        self._live_alloc = 0
        self._peak_device = 0
        self._max_live = 0
        self._peak_if = 0

    def _new_handle(self) -> int:
        h = self._next_handle
        self._next_handle += 1
        return h

    def _check_release(self, handle: int) -> None:
        if handle in self._freed:
            raise DoubleFree(f"handle {handle} already freed")
        if handle not in self._requested:
            raise UnknownHandle(f"unknown handle {handle}")

    def _track(self) -> None:
        self._peak_device = max(self._peak_device, self.device_in_use_bytes)
        self._max_live = max(self._max_live, len(self._requested))
        self._peak_if = max(self._peak_if, self._live_alloc - self._live_req)

    @property
    def device_in_use_bytes(self) -> int:
        raise NotImplementedError

    def chunks_for(self, m_r: int) -> int:
        """Physical chunks mapped for a request of ``m_r`` bytes (0 when there is no mapping)."""
        return 0

    def unusable_cached_bytes(self) -> int:
        """Cached bytes that cannot serve the request that just failed."""
        return 0

    def stats(self) -> AllocatorStats:
        return AllocatorStats(
            capacity_bytes=self.capacity_bytes,
            live_requested_bytes=self._live_req,
            live_allocated_bytes=self._live_alloc,
            device_in_use_bytes=self.device_in_use_bytes,
            cached_bytes=self.device_in_use_bytes - self._live_alloc,
            peak_device_bytes=self._peak_device,
            live_alloc_count=len(self._requested),
            max_live_alloc_count=self._max_live,
            peak_internal_frag_bytes=self._peak_if,
        )

    def allocated_size(self, handle: int) -> int:
        raise NotImplementedError

    def requested_size(self, handle: int) -> int:
        return self._requested[handle]


# ── virtual addressing ─────────────────────────────────────────────────


class VirtualAddressAllocator(_Base):
    kind = "va"

    def __init__(self, capacity_bytes: int, chunk_bytes: int = DEFAULT_CHUNK_BYTES,
                 min_chunk_bytes: int = MIN_CHUNK_BYTES):
        if chunk_bytes < min_chunk_bytes:
            raise ValueError(f"chunk size {chunk_bytes} below the {min_chunk_bytes} B floor")
        n_chunks = capacity_bytes // chunk_bytes
        if n_chunks < 1:
            raise ValueError("capacity smaller than one chunk")
        # capacity is rounded down to whole chunks
        super().__init__(n_chunks * chunk_bytes)
        self.chunk_bytes = chunk_bytes
        self.n_chunks = n_chunks
        self._released: list[int] = []  # heap of cached physical chunk ids
        self._created = 0
        self._spans: dict[int, list[int]] = {}

    @property
    def free_chunks(self) -> int:
        return self.n_chunks - sum(len(c) for c in self._spans.values())

    @property
    def device_in_use_bytes(self) -> int:
        return self._created * self.chunk_bytes

    def chunks_for(self, m_r: int) -> int:
        return -(-m_r // self.chunk_bytes)

    def allocate(self, m_r: int) -> int:
        if m_r < 1:
            raise ValueError("request must be at least one byte")
        k = self.chunks_for(m_r)
        avail = len(self._released) + (self.n_chunks - self._created)
        if avail < k:
            raise DeviceOOM(m_r, avail * self.chunk_bytes)
        chunks = []
        for _ in range(k):
            if self._released:
                chunks.append(heapq.heappop(self._released))
            else:
                chunks.append(self._created)
                self._created += 1
        h = self._new_handle()
        self._spans[h] = chunks
        self._requested[h] = m_r
        self._live_req += m_r
        self._live_alloc += k * self.chunk_bytes
        self._track()
        return h

    def deallocate(self, handle: int) -> None:
        self._check_release(handle)
        chunks = self._spans.pop(handle)
        for c in chunks:
            heapq.heappush(self._released, c)
        self._live_req -= self._requested.pop(handle)
        self._live_alloc -= len(chunks) * self.chunk_bytes
        self._freed.add(handle)

    def allocated_size(self, handle: int) -> int:
        return len(self._spans[handle]) * self.chunk_bytes

    def chunk_ids(self, handle: int) -> tuple[int, ...]:
        return tuple(self._spans[handle])


# ── best fit with caching ──────────────────────────────────────────────


@dataclass
class _Region:
    id: int
    segment: int
    start: int
    size: int
    free: bool = False

    @property
    def end(self) -> int:
        return self.start + self.size


class BestFitAllocator(_Base):
    kind = "bestfit"

    def __init__(self, capacity_bytes: int, full_coalesce: bool = False):
        super().__init__(capacity_bytes)
        self.full_coalesce = full_coalesce
        self._carved = 0
        self._n_segments = 0
        self._next_region = 0
        self._regions: dict[int, _Region] = {}
        self._by_start: dict[int, int] = {}
        self._by_end: dict[int, int] = {}
        self._cache: list[tuple[int, int]] = []  # sorted (size, region id) of free regions
        self._handle_region: dict[int, int] = {}

    @property
    def device_in_use_bytes(self) -> int:
        return self._carved

    def _add_region(self, segment: int, start: int, size: int, free: bool, rid: int | None = None) -> _Region:
        if rid is None:
            rid = self._next_region
            self._next_region += 1
        reg = _Region(rid, segment, start, size, free)
        self._regions[rid] = reg
        self._by_start[start] = rid
        self._by_end[reg.end] = rid
        if free:
            bisect.insort(self._cache, (size, rid))
        return reg

    def _drop_region(self, reg: _Region) -> None:
        del self._regions[reg.id]
        del self._by_start[reg.start]
        del self._by_end[reg.end]
        if reg.free:
            self._cache.remove((reg.size, reg.id))

    def allocate(self, m_r: int) -> int:
        if m_r < 1:
            raise ValueError("request must be at least one byte")
        idx = bisect.bisect_left(self._cache, (m_r, -1))
        if idx < len(self._cache):
            size, rid = self._cache[idx]
            reg = self._regions[rid]
            self._drop_region(reg)
            self._add_region(reg.segment, reg.start, m_r, False, rid)
            if size > m_r:
                self._add_region(reg.segment, reg.start + m_r, size - m_r, True)
        elif self.capacity_bytes - self._carved >= m_r:
            rid = self._add_region(self._n_segments, self._carved, m_r, False).id
            self._n_segments += 1
            self._carved += m_r
        else:
            raise DeviceOOM(m_r, self.capacity_bytes - self._live_alloc)
        h = self._new_handle()
        self._handle_region[h] = rid
        self._requested[h] = m_r
        self._live_req += m_r
        self._live_alloc += m_r
        self._track()
        return h

    def _mergeable(self, a: _Region, b: _Region) -> bool:
        return a.free and b.free and (self.full_coalesce or a.segment == b.segment)

    def deallocate(self, handle: int) -> None:
        self._check_release(handle)
        rid = self._handle_region.pop(handle)
        reg = self._regions[rid]
        self._drop_region(reg)
        reg = self._add_region(reg.segment, reg.start, reg.size, True, rid)
        left = self._regions.get(self._by_end.get(reg.start, -1))
        if left is not None and self._mergeable(left, reg):
            self._drop_region(left)
            self._drop_region(reg)
            reg = self._add_region(left.segment, left.start, left.size + reg.size, True, min(left.id, reg.id))
        right = self._regions.get(self._by_start.get(reg.end, -1))
        if right is not None and self._mergeable(reg, right):
            self._drop_region(right)
            self._drop_region(reg)
            reg = self._add_region(reg.segment, reg.start, reg.size + right.size, True, min(reg.id, right.id))
        m_r = self._requested.pop(handle)
        self._live_req -= m_r
        self._live_alloc -= m_r
        self._freed.add(handle)

    def allocated_size(self, handle: int) -> int:
        return self._regions[self._handle_region[handle]].size

    def unusable_cached_bytes(self) -> int:
        return self._carved - self._live_alloc

    def region_map(self) -> list[tuple[int, int, bool]]:
        """``(start, size, free)`` for every carved region, by address."""
        return [(r.start, r.size, r.free) for r in sorted(self._regions.values(), key=lambda r: r.start)]


def make_allocator(kind: str, capacity_bytes: int, chunk_bytes: int = DEFAULT_CHUNK_BYTES,
                   min_chunk_bytes: int = MIN_CHUNK_BYTES, full_coalesce: bool = False):
    if kind == "va":
        return VirtualAddressAllocator(capacity_bytes, chunk_bytes, min_chunk_bytes)
    if kind == "bestfit":
        return BestFitAllocator(capacity_bytes, full_coalesce)
    raise ValueError(f"unknown allocator {kind!r}")


# ── traces ─────────────────────────────────────────────────────────────


class TraceOp(NamedTuple):
    op: str  # "alloc" | "free"
    id: int
    bytes: int | None = None


def read_trace(lines: Iterable[str]) -> list[TraceOp]:
    out = []
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        d = json.loads(line)
        if d.get("op") == "alloc":
            out.append(TraceOp("alloc", int(d["id"]), int(d["bytes"])))
        elif d.get("op") == "free":
            out.append(TraceOp("free", int(d["id"])))
        else:
            raise ValueError(f"line {n}: unknown op {d.get('op')!r}")
    return out


def write_trace(trace: Iterable[TraceOp]) -> Iterator[str]:
    for t in trace:
        d = {"op": t.op, "id": t.id}
        if t.op == "alloc":
            d["bytes"] = t.bytes
        yield json.dumps(d)


def random_trace(n_steps: int, seed: int, max_bytes: int, live_target: int = 32,
                 min_bytes: int = 1) -> list[TraceOp]:
    """Random alloc/free interleaving; frees pick a uniformly random live id."""
    rng = random.Random(seed)
    live: list[int] = []
    out: list[TraceOp] = []
    nxt = 0
    for _ in range(n_steps):
        p_alloc = 0.5 if len(live) >= live_target else 0.75
        if live and rng.random() > p_alloc:
            j = rng.randrange(len(live))
            live[j], live[-1] = live[-1], live[j]
            out.append(TraceOp("free", live.pop()))
        else:
            out.append(TraceOp("alloc", nxt, rng.randint(min_bytes, max_bytes)))
            live.append(nxt)
            nxt += 1
    return out


def adversarial_trace(unit: int = 1) -> tuple[int, list[TraceOp]]:
    """A trace that strands free bytes in best-fit's cache.

    Returns ``(capacity_bytes, trace)``. Two carves of 6 units are freed and
    each is split by a 4-unit request; the two 2-unit leftovers cannot merge,
    so a final 4-unit request fails with 4 units free.
    """
    u = unit
    trace = [
        TraceOp("alloc", 0, 6 * u), TraceOp("alloc", 1, 6 * u),
        TraceOp("free", 0), TraceOp("free", 1),
        TraceOp("alloc", 2, 4 * u), TraceOp("alloc", 3, 4 * u),
        TraceOp("alloc", 4, 4 * u),
    ]
    return 12 * u, trace


class OomEvent(NamedTuple):
    step: int
    id: int
    requested: int
    free_bytes: int
    unusable_cached_bytes: int


@dataclass
class FragReport:
    worst_bytes: int = 0
    events: list[OomEvent] = field(default_factory=list)

    @property
    def oom_count(self) -> int:
        return len(self.events)


def worst_case_external_frag(trace: Iterable[TraceOp], allocator) -> FragReport:
    """Replay ``trace`` and measure cached bytes stranded at every OOM.

    Failed requests are recorded and skipped; their later frees are ignored.
    """
    report = FragReport()
    handles: dict[int, int] = {}
    for step, t in enumerate(trace):
        if t.op == "alloc":
            try:
                handles[t.id] = allocator.allocate(t.bytes)
            except DeviceOOM:
                stranded = allocator.unusable_cached_bytes()
                free = allocator.stats().free_bytes
                report.events.append(OomEvent(step, t.id, t.bytes, free, stranded))
                report.worst_bytes = max(report.worst_bytes, stranded)
        elif t.id in handles:
            allocator.deallocate(handles.pop(t.id))
    return report

"""Replay a schedule on one compute stream and two transfer channels.

Time is integer nanoseconds. Functions run strictly in execution order.
Swap-ins listed before function ``i`` are issued FIFO on the host-to-device
channel once function ``i-1`` has finished and once the swap-outs waited for
before ``i`` have completed (their memory is what the swap-ins reuse).
Reserved swap-outs are issued FIFO on the device-to-host channel when their
function finishes. Device memory is taken from the allocator when a swap-in
starts and returned when a swap-out completes or the variable is freed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple

from .allocator import DeviceOOM
from .graph import NetworkGraph, VariableSequence, sequence_for
from .scheduler import Schedule, validate_schedule

__all__ = [
    "CostModel",
    "Event",
    "Transfer",
    "SimulationResult",
    "InvalidSchedule",
    "simulate",
    "LowerBounds",
    "lower_bounds",
    "overlap_efficiency",
    "audit",
    "timeline_jsonl",
    "calibrate_compute",
]

STREAMS = ("compute", "h2d", "d2h")
_STREAM_ID = {s: k for k, s in enumerate(STREAMS)}


def _ceil(x: Fraction) -> int:
    return math.ceil(x)


def _per(nbytes: int, bandwidth: float) -> Fraction:
    # an infinite bandwidth models a free channel
    return Fraction(0) if math.isinf(bandwidth) else Fraction(nbytes) / Fraction(bandwidth)


@dataclass(frozen=True)
class CostModel:
    """Linear cost model. Units: ns, bytes, bytes/ns (50 B/ns = 50 GB/s); ``inf`` bandwidth is free."""

    compute_coeff: float = 0.02  # ns per byte touched by a function
    compute_fixed: float = 0.0  # ns per function
    h2d_bandwidth: float = 50.0
    d2h_bandwidth: float = 50.0
    transfer_fixed: float = 0.0  # ns per transfer
    map_cost_per_chunk: float = 0.0  # ns per mapped physical chunk (VA only)
    single_channel: bool = False

    def __post_init__(self) -> None:
        if min(self.compute_coeff, self.compute_fixed, self.transfer_fixed, self.map_cost_per_chunk) < 0:
            raise ValueError("cost model terms must be non-negative")
        if self.h2d_bandwidth <= 0 or self.d2h_bandwidth <= 0:
            raise ValueError("bandwidths must be positive")

    @classmethod
    def from_si(cls, h2d: float = 50e9, d2h: float = 50e9, compute_s_per_byte: float = 0.02e-9,
                compute_fixed_s: float = 0.0, transfer_fixed_s: float = 0.0,
                map_cost_s: float = 0.0, single_channel: bool = False) -> "CostModel":
        """Build from bytes/s and seconds."""
        return cls(compute_s_per_byte * 1e9, compute_fixed_s * 1e9, h2d / 1e9, d2h / 1e9,
                   transfer_fixed_s * 1e9, map_cost_s * 1e9, single_channel)

    def compute_ns(self, nbytes: int, override: float | None = None) -> int:
        if override is not None:
            return _ceil(Fraction(override))
        return _ceil(Fraction(self.compute_fixed) + Fraction(self.compute_coeff) * nbytes)

    def h2d_ns(self, nbytes: int, chunks: int = 0) -> int:
        return _ceil(Fraction(self.transfer_fixed) + _per(nbytes, self.h2d_bandwidth)
                     + Fraction(self.map_cost_per_chunk) * chunks)

    def d2h_ns(self, nbytes: int) -> int:
        return _ceil(Fraction(self.transfer_fixed) + _per(nbytes, self.d2h_bandwidth))


class Event(NamedTuple):
    t: int
    stream: str
    kind: str  # "start" | "end"
    id: str


class Transfer(NamedTuple):
    channel: str
    var: str
    function: int  # trigger function (h2d) or owning function (d2h)
    start: int
    end: int


class InvalidSchedule(ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"schedule fails replay validation: {report.first.message}")


@dataclass
class SimulationResult:
    makespan: int
    starts: list[int]
    ends: list[int]
    per_function_stall: list[int]
    compute_times: list[int]
    transfers: list[Transfer]
    peak_resident_bytes: int
    peak_device_bytes: int
    bytes_in: int
    bytes_out: int
    items_per_step: float
    allocator_stats: object | None = None
    timeline: list[Event] = field(default_factory=list)

    @property
    def throughput(self) -> float:
        """Items per second."""
        return self.items_per_step * 1e9 / self.makespan if self.makespan else math.inf

    @property
    def total_stall(self) -> int:
        return sum(self.per_function_stall)


def simulate(graph: NetworkGraph | VariableSequence, schedule: Schedule, cost_model: CostModel,
             allocator=None, budget: int | None = None, items_per_step: float = 1.0,
             record_timeline: bool = True) -> SimulationResult:
    """Replay ``schedule`` and return its timing and memory profile.

    Raises :class:`InvalidSchedule` if the schedule fails validation against
    ``budget`` and :class:`~oocsched.allocator.DeviceOOM` if the allocator
    cannot serve a swap-in.
    """
    seq = graph if isinstance(graph, VariableSequence) else sequence_for(graph)
    report = validate_schedule(schedule, seq, budget)
    if not report.ok:
        raise InvalidSchedule(report)
    sizes = seq.sizes
    cm = cost_model
    n = seq.n_functions

    free_at = {"h2d": 0, "d2h": 0}

    def channel(name: str) -> str:
        return "h2d" if cm.single_channel else name

    in_done: dict[str, int] = {}
    out_done: dict[str, int] = {}
    transfers: list[Transfer] = []
    mem_ops: list[tuple[int, int, int, str, str, int]] = []  # (t, phase, seq, op, var, fn)
    starts, ends, stalls, ctimes = [0] * n, [0] * n, [0] * n, [0] * n
    prev_end = 0
    bytes_in = bytes_out = 0

    for i in range(n):
        gate = max([prev_end] + [out_done[v] for v in schedule.wait_out[i]])
        for v in schedule.swap_in[i]:
            b = sizes[v]
            ch = channel("h2d")
            k = allocator.chunks_for(b) if allocator is not None else 0
            s = max(free_at[ch], gate)
            e = s + cm.h2d_ns(b, k)
            free_at[ch] = e
            in_done[v] = e
            bytes_in += b
            transfers.append(Transfer("h2d", v, i, s, e))
            mem_ops.append((s, 1, len(mem_ops), "alloc", v, i))
        ready = max([prev_end] + [out_done[v] for v in schedule.wait_out[i]]
                    + [in_done[v] for v in seq.distinct[i]])
        ct = cm.compute_ns(seq.function_bytes(i), seq.compute_costs[i])
        starts[i], ends[i], ctimes[i] = ready, ready + ct, ct
        stalls[i] = ready - prev_end
        prev_end = ends[i]
        for v in schedule.free[i]:
            mem_ops.append((ends[i], 0, len(mem_ops), "release", v, i))
        for v in schedule.reserve_out[i]:
            b = sizes[v]
            ch = channel("d2h")
            s = max(free_at[ch], ends[i])
            e = s + cm.d2h_ns(b)
            free_at[ch] = e
            out_done[v] = e
            bytes_out += b
            transfers.append(Transfer("d2h", v, i, s, e))
            mem_ops.append((e, 0, len(mem_ops), "release", v, i))

    # memory replay in time order; releases before allocations at equal times
    mem_ops.sort()
    handles: dict[str, int] = {}
    live = peak_live = 0
    for t, _, _, op, v, i in mem_ops:
        if op == "alloc":
            if allocator is not None:
                try:
                    handles[v] = allocator.allocate(sizes[v])
                except DeviceOOM as e:
                    raise DeviceOOM(e.requested, e.free_bytes, seq.function_ids[i], v) from None
            live += sizes[v]
            peak_live = max(peak_live, live)
        else:
            if allocator is not None:
                allocator.deallocate(handles.pop(v))
            live -= sizes[v]

    astats = allocator.stats() if allocator is not None else None
    result = SimulationResult(
        makespan=prev_end,
        starts=starts,
        ends=ends,
        per_function_stall=stalls,
        compute_times=ctimes,
        transfers=transfers,
        peak_resident_bytes=peak_live,
        peak_device_bytes=astats.peak_device_bytes if astats else peak_live,
        bytes_in=bytes_in,
        bytes_out=bytes_out,
        items_per_step=items_per_step,
        allocator_stats=astats,
    )
    if record_timeline:
        result.timeline = _timeline(seq, result)
    return result


def _timeline(seq: VariableSequence, r: SimulationResult) -> list[Event]:
    raw = []
    for i, fid in enumerate(seq.function_ids):
        raw.append((r.starts[i], "compute", "start", fid))
        raw.append((r.ends[i], "compute", "end", fid))
    for tr in r.transfers:
        raw.append((tr.start, tr.channel, "start", tr.var))
        raw.append((tr.end, tr.channel, "end", tr.var))
    order = sorted(range(len(raw)), key=lambda k: (raw[k][0], _STREAM_ID[raw[k][1]], k))
    return [Event(*raw[k]) for k in order]


def timeline_jsonl(events: Iterable[Event]) -> Iterable[str]:
    for e in events:
        yield json.dumps({"t": e.t, "stream": e.stream, "kind": e.kind, "id": e.id})


class LowerBounds(NamedTuple):
    compute_bound: int
    transfer_bound: int


def lower_bounds(graph: NetworkGraph | VariableSequence, cost_model: CostModel, allocator=None) -> LowerBounds:
    """Serial compute time, and the time to bring every variable in once."""
    seq = graph if isinstance(graph, VariableSequence) else sequence_for(graph)
    comp = sum(cost_model.compute_ns(seq.function_bytes(i), seq.compute_costs[i]) for i in range(seq.n_functions))
    xfer = 0
    for v in seq.variables:
        k = allocator.chunks_for(seq.sizes[v]) if allocator is not None else 0
        xfer += cost_model.h2d_ns(seq.sizes[v], k)
    return LowerBounds(comp, xfer)


def overlap_efficiency(result: SimulationResult, bounds: LowerBounds) -> float:
    if result.makespan == 0:
        return 1.0
    return max(bounds) / result.makespan


def calibrate_compute(seq: VariableSequence, cost_model: CostModel) -> CostModel:
    """Return ``cost_model`` with ``compute_coeff`` set so compute and transfer bounds match."""
    from dataclasses import replace

    touched = sum(seq.function_bytes(i) for i in range(seq.n_functions))
    xfer = lower_bounds(seq, replace(cost_model, compute_coeff=0.0)).transfer_bound
    fixed = cost_model.compute_fixed * seq.n_functions
    return replace(cost_model, compute_coeff=max(0.0, (xfer - fixed) / touched))


def audit(result: SimulationResult, seq: VariableSequence, schedule: Schedule,
          single_channel: bool = False) -> list[str]:
    """Post-hoc causality and channel-exclusivity checks; returns problems found."""
    problems = []
    in_done: dict[str, int] = {}
    out_done: dict[str, int] = {}
    by_fn_in: dict[int, list[Transfer]] = {}
    by_fn_out: dict[int, list[Transfer]] = {}
    for tr in result.transfers:
        (by_fn_in if tr.channel == "h2d" else by_fn_out).setdefault(tr.function, []).append(tr)
    prev_end = 0
    for i in range(seq.n_functions):
        gate = max([prev_end] + [out_done[v] for v in schedule.wait_out[i]])
        for tr in by_fn_in.get(i, []):
            if tr.start < gate:
                problems.append(f"swap-in of {tr.var} starts at {tr.start} before its gate {gate}")
            in_done[tr.var] = tr.end
        deps = [prev_end] + [out_done[v] for v in schedule.wait_out[i]] + [in_done[v] for v in seq.distinct[i]]
        if result.starts[i] < max(deps):
            problems.append(f"function {seq.function_ids[i]} starts before its dependencies")
        for tr in by_fn_out.get(i, []):
            if tr.start < result.ends[i]:
                problems.append(f"swap-out of {tr.var} starts before {seq.function_ids[i]} ends")
            out_done[tr.var] = tr.end
        prev_end = result.ends[i]
    chans = {"h2d": [], "d2h": []}
    for tr in result.transfers:
        chans["h2d" if single_channel else tr.channel].append((tr.start, tr.end))
    for name, ivs in chans.items():
        ivs.sort()
        for (s0, e0), (s1, e1) in zip(ivs, ivs[1:]):
            if s1 < e0:
                problems.append(f"overlapping transfers on {name}: [{s0},{e0}) and [{s1},{e1})")
    return problems

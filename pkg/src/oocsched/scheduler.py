"""Byte-window swap scheduling under a device-memory budget.

The scheduler slides a window of ``schedule_window_bytes`` over the variable
sequence. At each function it

(a) triggers swap-ins for host-resident variables entering the window,
(b) waits for the oldest reserved swap-outs until the scheduled resident
    bytes fit the budget,
(c) reserves swap-outs after the function for its variables, skipping
    variables that are dead (freed instead) or already inside the window.

A variable whose reserved swap-out has not been waited for when it re-enters
the window simply stays on device and the reservation is dropped.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .graph import VariableSequence, footprint_stats

__all__ = [
    "InfeasibleBudget",
    "WindowConfig",
    "ScheduleStats",
    "Schedule",
    "Violation",
    "ValidationReport",
    "build_schedule",
    "window_end",
    "validate_schedule",
    "replay_stats",
    "min_feasible_budget",
]


class InfeasibleBudget(Exception):
    def __init__(self, function: int, function_id: str, needed: int, budget: int):
        self.function = function
        self.function_id = function_id
        self.needed = needed
        self.budget = budget
        super().__init__(
            f"budget {budget} B infeasible at function {function} ({function_id}): "
            f"{needed} B must stay resident"
        )


@dataclass(frozen=True)
class WindowConfig:
    schedule_window_bytes: int
    memory_budget_bytes: int

    def __post_init__(self) -> None:
        if self.schedule_window_bytes < 1 or self.memory_budget_bytes < 1:
            raise ValueError("window and budget must be positive")


class ScheduleStats(NamedTuple):
    bytes_in: int
    bytes_out: int
    bytes_freed: int
    peak_scheduled_resident_bytes: int


_LISTS = ("swap_in", "wait_out", "reserve_out", "free")


@dataclass(frozen=True)
class Schedule:
    """Per-function transfer actions, indexed by execution position.

    ``swap_in[i]`` and ``wait_out[i]`` happen before function ``i``;
    ``reserve_out[i]`` and ``free[i]`` after it.
    """

    function_ids: tuple[str, ...]
    swap_in: tuple[tuple[str, ...], ...]
    wait_out: tuple[tuple[str, ...], ...]
    reserve_out: tuple[tuple[str, ...], ...]
    free: tuple[tuple[str, ...], ...]
    stats: ScheduleStats | None = field(default=None, compare=False)

    @classmethod
    def from_lists(cls, function_ids: Sequence[str], swap_in, wait_out, reserve_out, free,
                   seq: VariableSequence | None = None) -> "Schedule":
        freeze = lambda ls: tuple(tuple(x) for x in ls)  # noqa: E731
        s = cls(tuple(function_ids), freeze(swap_in), freeze(wait_out), freeze(reserve_out), freeze(free))
        if seq is not None:
            s = s.with_stats(seq)
        return s

    def with_stats(self, seq: VariableSequence) -> "Schedule":
        return Schedule(self.function_ids, self.swap_in, self.wait_out, self.reserve_out, self.free,
                        replay_stats(self, seq))

    @property
    def n_functions(self) -> int:
        return len(self.function_ids)

    def transfer_bytes(self, sizes: dict[str, int]) -> int:
        return sum(sizes[v] for lists in (self.swap_in, self.reserve_out) for vs in lists for v in vs)

    def to_dict(self) -> dict:
        return {
            "functions": [
                {"id": fid, **{k: list(getattr(self, k)[i]) for k in _LISTS}}
                for i, fid in enumerate(self.function_ids)
            ]
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, doc: dict, seq: VariableSequence | None = None) -> "Schedule":
        fns = doc["functions"]
        lists = {k: [f.get(k, []) for f in fns] for k in _LISTS}
        return cls.from_lists([f["id"] for f in fns], seq=seq, **lists)

    @classmethod
    def from_json(cls, text: str, seq: VariableSequence | None = None) -> "Schedule":
        return cls.from_dict(json.loads(text), seq)


def window_end(seq: VariableSequence, i: int, window: int, prefix: Sequence[int] | None = None) -> int:
    """Last occurrence index covered by the window anchored at function ``i``.

    The window never ends before the function's own last occurrence.
    """
    if prefix is None:
        prefix = _prefix(seq)
    lo, hi = seq.fn_ranges[i]
    r = bisect.bisect_right(prefix, prefix[lo] + window) - 2
    return max(r, hi - 1)


def _prefix(seq: VariableSequence) -> list[int]:
    out = [0]
    for o in seq.occurrences:
        out.append(out[-1] + o.size)
    return out


def build_schedule(seq: VariableSequence, config: WindowConfig) -> Schedule:
    n = seq.n_functions
    sizes = seq.sizes
    budget = config.memory_budget_bytes
    prefix = _prefix(seq)
    swap_in: list[list[str]] = [[] for _ in range(n)]
    wait_out: list[list[str]] = [[] for _ in range(n)]
    reserve_out: list[list[str]] = [[] for _ in range(n)]
    free: list[list[str]] = [[] for _ in range(n)]

    on_host = set(seq.variables)
    pending: dict[str, int] = {}  # reserved, unwaited swap-outs in reservation order
    resident = 0
    frontier = -1  # highest occurrence index any window has reached
    peak = 0
    bytes_in = bytes_out = bytes_freed = 0

    for i in range(n):
        r = window_end(seq, i, config.schedule_window_bytes, prefix)
        for k in range(frontier + 1, r + 1):
            v = seq.occurrences[k].var
            if v in on_host:
                on_host.discard(v)
                swap_in[i].append(v)
                resident += sizes[v]
                bytes_in += sizes[v]
            elif v in pending:
                reserve_out[pending.pop(v)].remove(v)
                bytes_out -= sizes[v]
        frontier = max(frontier, r)

        while resident > budget and pending:
            v = next(iter(pending))
            del pending[v]
            wait_out[i].append(v)
            on_host.add(v)
            resident -= sizes[v]
        if resident > budget:
            raise InfeasibleBudget(i, seq.function_ids[i], resident, budget)
        peak = max(peak, resident)

        for v in seq.distinct[i]:
            nxt = seq.next_use_after(i, v)
            if nxt is None:
                free[i].append(v)
                resident -= sizes[v]
                bytes_freed += sizes[v]
            elif nxt <= frontier:
                continue
            else:
                reserve_out[i].append(v)
                pending[v] = i
                bytes_out += sizes[v]

    stats = ScheduleStats(bytes_in, bytes_out, bytes_freed, peak)
    s = Schedule.from_lists(seq.function_ids, swap_in, wait_out, reserve_out, free)
    return Schedule(s.function_ids, s.swap_in, s.wait_out, s.reserve_out, s.free, stats)


# ── replay validation ───────────────────────────────────────────────────


class Violation(NamedTuple):
    check: int  # 0 structural, 1 residency, 2 budget, 3 dead swap-out, 4 redundant swap-in
    function: int
    variable: str | None
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation]
    peak_resident_bytes: int

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def __bool__(self) -> bool:
        return self.ok


_HOST, _DEVICE, _PENDING, _DEAD = "host", "device", "pending", "dead"


def _replay(schedule: Schedule, seq: VariableSequence, budget: int | None):
    sizes = seq.sizes
    state = {v: _HOST for v in seq.variables}
    resident = peak = 0
    bytes_in = bytes_out = bytes_freed = 0
    bad: list[Violation] = []
    if schedule.n_functions != seq.n_functions or tuple(schedule.function_ids) != tuple(seq.function_ids):
        bad.append(Violation(0, 0, None, "schedule and sequence disagree on the function order"))
        return bad, ScheduleStats(0, 0, 0, 0)

    def dup_check(i, name, vs):
        if len(set(vs)) != len(vs):
            bad.append(Violation(0, i, None, f"duplicate entries in {name} at function {i}"))

    for i in range(seq.n_functions):
        fid = seq.function_ids[i]
        used = set(seq.distinct[i])
        for name in _LISTS:
            dup_check(i, name, getattr(schedule, name)[i])
        for v in schedule.wait_out[i]:
            if state.get(v) != _PENDING:
                bad.append(Violation(0, i, v, f"wait for {v!r} before {fid} without a reserved swap-out"))
                continue
            state[v] = _HOST
            resident -= sizes[v]
        for v in schedule.swap_in[i]:
            st = state.get(v)
            if st != _HOST:
                bad.append(Violation(4, i, v, f"swap-in of {v!r} before {fid} while it is {st}"))
                continue
            state[v] = _DEVICE
            resident += sizes[v]
            bytes_in += sizes[v]
        peak = max(peak, resident)
        if budget is not None and resident > budget:
            bad.append(Violation(2, i, None, f"{resident} B resident before {fid} exceeds budget {budget} B"))
        for v in seq.distinct[i]:
            if state[v] != _DEVICE:
                bad.append(Violation(1, i, v, f"{fid} runs while {v!r} is {state[v]}"))
        for v in schedule.reserve_out[i]:
            if v not in used or state.get(v) != _DEVICE:
                bad.append(Violation(0, i, v, f"swap-out of {v!r} reserved after {fid} which does not hold it"))
                continue
            if seq.next_use_after(i, v) is None:
                bad.append(Violation(3, i, v, f"swap-out of dead variable {v!r} after {fid}"))
            state[v] = _PENDING
            bytes_out += sizes[v]
        for v in schedule.free[i]:
            if v not in used or state.get(v) not in (_DEVICE,):
                bad.append(Violation(0, i, v, f"free of {v!r} after {fid} which does not hold it"))
                continue
            if seq.next_use_after(i, v) is not None:
                bad.append(Violation(1, i, v, f"{v!r} freed after {fid} but used later"))
            state[v] = _DEAD
            resident -= sizes[v]
            bytes_freed += sizes[v]
    return bad, ScheduleStats(bytes_in, bytes_out, bytes_freed, peak)


def validate_schedule(schedule: Schedule, seq: VariableSequence, config: WindowConfig | int | None) -> ValidationReport:
    """Replay ``schedule`` against ``seq`` and report every rule it breaks.

    ``config`` may be a :class:`WindowConfig`, a plain budget in bytes, or
    ``None`` for an unlimited budget.
    """
    budget = config.memory_budget_bytes if isinstance(config, WindowConfig) else config
    bad, stats = _replay(schedule, seq, budget)
    return ValidationReport(bad, stats.peak_scheduled_resident_bytes)


def replay_stats(schedule: Schedule, seq: VariableSequence) -> ScheduleStats:
    return _replay(schedule, seq, None)[1]


def min_feasible_budget(seq: VariableSequence, window: int) -> int:
    """Smallest budget at which :func:`build_schedule` succeeds for ``window``."""
    fp = footprint_stats(seq)
    lo, hi = fp.max_function_bytes, fp.total_bytes

    def ok(b: int) -> bool:
        try:
            build_schedule(seq, WindowConfig(window, b))
        except InfeasibleBudget:
            return False
        return True

    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo

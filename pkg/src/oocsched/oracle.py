"""Exhaustive search for the fastest valid schedule of a tiny instance.

The search covers every schedule expressible with function-boundary actions:
each variable's first swap-in may be triggered before any function up to its
first use; between two uses it either stays resident or is swapped out after
the earlier use, waited for before some later function ``w`` and swapped
back in before some ``k`` with ``w <= k <= next use``. Every candidate is
validated against the budget and simulated; the minimum makespan wins.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import time
from dataclasses import dataclass
from typing import NamedTuple

from .graph import VariableSequence, graph_from_uses, sequence_for
from .scheduler import Schedule, validate_schedule
from .simulator import CostModel, simulate

__all__ = [
    "OracleLimits",
    "LimitExceeded",
    "InfeasibleInstance",
    "OracleResult",
    "search_space_size",
    "brute_force_schedule",
    "instance_hash",
    "tiny_instances",
]


class LimitExceeded(Exception):
    pass


class InfeasibleInstance(Exception):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_functions: int = 6
    max_occurrences: int = 10
    max_candidates: int = 2_000_000
    time_budget_s: float = 120.0


class OracleResult(NamedTuple):
    optimal_makespan: int
    schedule: Schedule
    candidates: int
    valid: int


def _var_options(seq: VariableSequence, v: str) -> list[tuple]:
    """All action choices for one variable: (first trigger, per-gap choices)."""
    uses = seq.uses_of(v)
    firsts = range(0, uses[0] + 1)
    gaps = []
    for a, b in zip(uses, uses[1:]):
        opts = [None] + [(w, k) for w in range(a + 1, b + 1) for k in range(w, b + 1)]
        gaps.append(opts)
    return [(f, g) for f in firsts for g in itertools.product(*gaps)]


def search_space_size(seq: VariableSequence) -> int:
    total = 1
    for v in seq.variables:
        uses = seq.uses_of(v)
        n = uses[0] + 1
        for a, b in zip(uses, uses[1:]):
            gap = b - a
            n *= 1 + gap * (gap + 1) // 2
        total *= n
    return total


def _first_occ(seq: VariableSequence) -> list[dict[str, int]]:
    out = []
    for lo, hi in seq.fn_ranges:
        d: dict[str, int] = {}
        for k in range(lo, hi):
            d.setdefault(seq.occurrences[k].var, k)
        out.append(d)
    return out


def _assemble(seq: VariableSequence, variables: list[str], choice: tuple, first_occ) -> Schedule:
    n = seq.n_functions
    lists = {k: [[] for _ in range(n)] for k in ("swap_in", "wait_out", "reserve_out", "free")}
    for v, (first, gaps) in zip(variables, choice):
        uses = seq.uses_of(v)
        lists["swap_in"][first].append((first_occ[uses[0]][v], v))
        for (a, b), g in zip(zip(uses, uses[1:]), gaps):
            if g is None:
                continue
            w, k = g
            lists["reserve_out"][a].append((first_occ[a][v], v))
            lists["wait_out"][w].append(((a, first_occ[a][v]), v))
            lists["swap_in"][k].append((first_occ[b][v], v))
        lists["free"][uses[-1]].append((first_occ[uses[-1]][v], v))
    frozen = {k: [[v for _, v in sorted(xs)] for xs in ls] for k, ls in lists.items()}
    return Schedule.from_lists(seq.function_ids, **frozen)


def brute_force_schedule(seq: VariableSequence, budget: int, cost_model: CostModel | None = None,
                         limits: OracleLimits = OracleLimits()) -> OracleResult:
    if seq.n_functions > limits.max_functions or len(seq) > limits.max_occurrences:
        raise LimitExceeded(
            f"instance has {seq.n_functions} functions / {len(seq)} occurrences; "
            f"limits are {limits.max_functions} / {limits.max_occurrences}"
        )
    space = search_space_size(seq)
    if space > limits.max_candidates:
        raise LimitExceeded(f"search space {space} exceeds {limits.max_candidates} candidates")
    cm = cost_model or CostModel(compute_coeff=1.0, h2d_bandwidth=1.0, d2h_bandwidth=1.0)
    variables = seq.variables
    first_occ = _first_occ(seq)
    per_var = [_var_options(seq, v) for v in variables]
    deadline = time.monotonic() + limits.time_budget_s
    best: tuple[int, Schedule] | None = None
    count = valid = 0
    for choice in itertools.product(*per_var):
        count += 1
        if count % 4096 == 0 and time.monotonic() > deadline:
            raise LimitExceeded(f"time budget of {limits.time_budget_s}s exhausted")
        sched = _assemble(seq, variables, choice, first_occ)
        if not validate_schedule(sched, seq, budget).ok:
            continue
        valid += 1
        span = simulate(seq, sched, cm, record_timeline=False).makespan
        if best is None or span < best[0]:
            best = (span, sched)
    if best is None:
        raise InfeasibleInstance(f"no schedule fits budget {budget}")
    return OracleResult(best[0], best[1].with_stats(seq), count, valid)


def instance_hash(seq: VariableSequence) -> str:
    """Hash of the instance shape, invariant under variable renaming."""
    names = {v: f"v{k}" for k, v in enumerate(seq.variables)}
    doc = {
        "functions": [[names[seq.occurrences[k].var] for k in range(lo, hi)] for lo, hi in seq.fn_ranges],
        "bytes": [seq.sizes[v] for v in seq.variables],
        "costs": list(seq.compute_costs),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _use_lists(n_functions: int, max_vars: int):
    """Per-function variable lists up to renaming: new variables appear in order."""

    def rec(i: int, n_vars: int, acc: list):
        if i == n_functions:
            yield [list(f) for f in acc]
            return
        for width in range(1, max_vars + 1):
            for combo in itertools.permutations(range(n_vars + width), width):
                # fresh ids must be introduced as n_vars, n_vars+1, ...
                fresh = [c for c in combo if c >= n_vars]
                if fresh != list(range(n_vars, n_vars + len(fresh))):
                    continue
                yield from rec(i + 1, n_vars + len(fresh), acc + [combo])

    yield from rec(0, 0, [])


def tiny_instances(n_functions: int = 3, max_vars: int = 2, sizes: tuple[int, ...] = (1, 2)):
    """Every graph with ``n_functions`` functions of 1..``max_vars`` variables each.

    Variables are named ``v0, v1, ...`` by first appearance and functions run in
    listed order. Yields ``(uses, size_map, VariableSequence)``.
    """
    for uses in _use_lists(n_functions, max_vars):
        n_vars = 1 + max(v for f in uses for v in f)
        names = [[f"v{v}" for v in f] for f in uses]
        for combo in itertools.product(sizes, repeat=n_vars):
            size_map = {f"v{k}": b for k, b in enumerate(combo)}
            yield names, size_map, sequence_for(graph_from_uses(names, size_map))

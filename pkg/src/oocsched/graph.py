"""Networks as DAGs of functions over byte-sized variables.

A :class:`NetworkGraph` is validated on construction. Executing it means
running its functions in a topological order; :func:`build_variable_sequence`
flattens the per-function variable lists along that order, which is the
structure every scheduler in this package works on.
"""
from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

__all__ = [
    "ParseError",
    "ValidationError",
    "VariableDecl",
    "FunctionNode",
    "NetworkGraph",
    "Occurrence",
    "VariableSequence",
    "FootprintStats",
    "load_graph",
    "read_graph",
    "dump_graph",
    "topological_order",
    "build_variable_sequence",
    "sequence_for",
    "footprint_stats",
]


class ParseError(ValueError):
    """The graph document is not well-formed."""


class ValidationError(ValueError):
    """The graph document parsed but describes an invalid network."""


@dataclass(frozen=True)
class VariableDecl:
    id: str
    size_bytes: int


@dataclass(frozen=True)
class FunctionNode:
    id: str
    uses: tuple[str, ...]
    outputs: tuple[str, ...] = ()
    # Overrides the cost model's compute time for this function (ns).
    compute_cost: float | None = None


_DIGITS = re.compile(r"(\d+)")


def _natural_key(s: str) -> tuple:
    # "f2" < "f10"; digit runs compare numerically
    return tuple((0, int(p), p) if p.isdigit() else (1, 0, p) for p in _DIGITS.split(s) if p)


@dataclass(frozen=True)
class NetworkGraph:
    """Validated DAG of functions.

    Edges are derived from variable usage: each variable has one producer
    (the function listing it in ``outputs``, or else the first listed function
    that uses it) and an edge runs from the producer to every other user.
    """

    variables: tuple[VariableDecl, ...]
    functions: tuple[FunctionNode, ...]
    edges: tuple[tuple[int, int], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "functions", tuple(self.functions))
        sizes: dict[str, int] = {}
        for v in self.variables:
            if v.id in sizes:
                raise ValidationError(f"duplicate variable id {v.id!r}")
            if isinstance(v.size_bytes, bool) or not isinstance(v.size_bytes, int) or v.size_bytes < 1:
                raise ValidationError(f"variable {v.id!r} has non-positive size {v.size_bytes!r}")
            sizes[v.id] = v.size_bytes
        seen_fn: set[str] = set()
        users: dict[str, list[int]] = {v: [] for v in sizes}
        producers: dict[str, list[int]] = {v: [] for v in sizes}
        for fi, f in enumerate(self.functions):
            if f.id in seen_fn:
                raise ValidationError(f"duplicate function id {f.id!r}")
            seen_fn.add(f.id)
            if not f.uses:
                raise ValidationError(f"function {f.id!r} uses no variables")
            if f.compute_cost is not None and f.compute_cost < 0:
                raise ValidationError(f"function {f.id!r} has negative compute_cost")
            for v in f.uses:
                if v not in sizes:
                    raise ValidationError(f"function {f.id!r} uses undeclared variable {v!r}")
                if not users[v] or users[v][-1] != fi:
                    users[v].append(fi)
            for v in f.outputs:
                if v not in f.uses:
                    raise ValidationError(f"function {f.id!r} outputs {v!r} which is not in its uses")
                if fi not in producers[v]:
                    producers[v].append(fi)
        edges: set[tuple[int, int]] = set()
        for v, us in users.items():
            if not us:
                raise ValidationError(f"variable {v!r} is not used by any function")
            if len(producers[v]) > 1:
                names = [self.functions[p].id for p in producers[v]]
                raise ValidationError(f"variable {v!r} has several producers: {names}")
            src = producers[v][0] if producers[v] else us[0]
            edges.update((src, u) for u in us if u != src)
        object.__setattr__(self, "edges", tuple(sorted(edges)))
        self._kahn()  # raises on cycles

    @property
    def sizes(self) -> dict[str, int]:
        return {v.id: v.size_bytes for v in self.variables}

    @property
    def n_functions(self) -> int:
        return len(self.functions)

    def successors(self) -> list[list[int]]:
        succ: list[list[int]] = [[] for _ in self.functions]
        for a, b in self.edges:
            succ[a].append(b)
        return succ

    def _kahn(self) -> list[int]:
        n = len(self.functions)
        indeg = [0] * n
        succ = self.successors()
        for _, b in self.edges:
            indeg[b] += 1
        heap = [(_natural_key(self.functions[i].id), i) for i in range(n) if indeg[i] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            _, i = heapq.heappop(heap)
            order.append(i)
            for j in succ[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(heap, (_natural_key(self.functions[j].id), j))
        if len(order) != n:
            stuck = sorted(self.functions[i].id for i in range(n) if indeg[i] > 0)
            raise ValidationError(f"cycle among functions {stuck}")
        return order


def topological_order(graph: NetworkGraph) -> list[int]:
    """Function indices in execution order; ties go to the smallest id (natural sort)."""
    return graph._kahn()


# ── serialization ───────────────────────────────────────────────────────


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise ParseError(msg)


def load_graph(text: str) -> NetworkGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}") from e
    _expect(isinstance(doc, dict), "top level must be an object")
    _expect(isinstance(doc.get("variables"), list), "'variables' must be a list")
    _expect(isinstance(doc.get("functions"), list), "'functions' must be a list")
    variables = []
    for i, v in enumerate(doc["variables"]):
        _expect(isinstance(v, dict), f"variables[{i}] must be an object")
        _expect(isinstance(v.get("id"), str), f"variables[{i}].id must be a string")
        b = v.get("bytes")
        _expect(isinstance(b, int) and not isinstance(b, bool), f"variables[{i}].bytes must be an integer")
        variables.append(VariableDecl(v["id"], b))
    functions = []
    for i, f in enumerate(doc["functions"]):
        _expect(isinstance(f, dict), f"functions[{i}] must be an object")
        _expect(isinstance(f.get("id"), str), f"functions[{i}].id must be a string")
        uses = f.get("uses")
        _expect(isinstance(uses, list) and all(isinstance(u, str) for u in uses),
                f"functions[{i}].uses must be a list of strings")
        outputs = f.get("outputs", [])
        _expect(isinstance(outputs, list) and all(isinstance(u, str) for u in outputs),
                f"functions[{i}].outputs must be a list of strings")
        cost = f.get("compute_cost")
        _expect(cost is None or (isinstance(cost, (int, float)) and not isinstance(cost, bool)),
                f"functions[{i}].compute_cost must be a number")
        functions.append(FunctionNode(f["id"], tuple(uses), tuple(outputs), cost))
    return NetworkGraph(tuple(variables), tuple(functions))


def read_graph(path) -> NetworkGraph:
    with open(path, encoding="utf-8") as fh:
        return load_graph(fh.read())


def dump_graph(graph: NetworkGraph, indent: int | None = None) -> str:
    fns = []
    for f in graph.functions:
        d: dict = {"id": f.id, "uses": list(f.uses)}
        if f.outputs:
            d["outputs"] = list(f.outputs)
        if f.compute_cost is not None:
            d["compute_cost"] = f.compute_cost
        fns.append(d)
    doc = {
        "variables": [{"id": v.id, "bytes": v.size_bytes} for v in graph.variables],
        "functions": fns,
    }
    return json.dumps(doc, indent=indent)


# ── variable sequence ───────────────────────────────────────────────────


class Occurrence(NamedTuple):
    var: str
    fn: int  # position in the execution order
    size: int


@dataclass(frozen=True)
class VariableSequence:
    """Flattened variable occurrences along an execution order.

    ``fn_ranges[i]`` is the half-open occurrence span of the i-th executed
    function; ``next_use[k]`` is the index of the next occurrence of the same
    variable after ``k`` (``None`` when there is none).
    """

    function_ids: tuple[str, ...]
    order: tuple[int, ...]
    occurrences: tuple[Occurrence, ...]
    fn_ranges: tuple[tuple[int, int], ...]
    next_use: tuple[int | None, ...]
    sizes: dict[str, int]
    compute_costs: tuple[float | None, ...]
    # derived per-function views
    distinct: tuple[tuple[str, ...], ...] = field(init=False, repr=False)
    _next_after: tuple[dict[str, int | None], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        distinct = []
        next_after = []
        for lo, hi in self.fn_ranges:
            seen: dict[str, int] = {}
            for k in range(lo, hi):
                seen[self.occurrences[k].var] = k  # last occurrence inside f
            distinct.append(tuple(seen))
            next_after.append({v: self.next_use[k] for v, k in seen.items()})
        object.__setattr__(self, "distinct", tuple(distinct))
        object.__setattr__(self, "_next_after", tuple(next_after))

    @property
    def n_functions(self) -> int:
        return len(self.fn_ranges)

    def __len__(self) -> int:
        return len(self.occurrences)

    def next_use_after(self, i: int, var: str) -> int | None:
        """Occurrence index of ``var``'s first use after function ``i`` finishes."""
        return self._next_after[i][var]

    def function_bytes(self, i: int) -> int:
        return sum(self.sizes[v] for v in self.distinct[i])

    def uses_of(self, var: str) -> list[int]:
        """Execution positions of the functions using ``var``, ascending, deduplicated."""
        out: list[int] = []
        for o in self.occurrences:
            if o.var == var and (not out or out[-1] != o.fn):
                out.append(o.fn)
        return out

    @property
    def variables(self) -> list[str]:
        """Variables in order of first occurrence."""
        return list(dict.fromkeys(o.var for o in self.occurrences))


def build_variable_sequence(graph: NetworkGraph, order: Sequence[int]) -> VariableSequence:
    sizes = graph.sizes
    occ: list[Occurrence] = []
    ranges = []
    for pos, fi in enumerate(order):
        lo = len(occ)
        occ.extend(Occurrence(v, pos, sizes[v]) for v in graph.functions[fi].uses)
        ranges.append((lo, len(occ)))
    nxt: list[int | None] = [None] * len(occ)
    last: dict[str, int] = {}
    for k in range(len(occ) - 1, -1, -1):
        v = occ[k].var
        nxt[k] = last.get(v)
        last[v] = k
    return VariableSequence(
        function_ids=tuple(graph.functions[fi].id for fi in order),
        order=tuple(order),
        occurrences=tuple(occ),
        fn_ranges=tuple(ranges),
        next_use=tuple(nxt),
        sizes=sizes,
        compute_costs=tuple(graph.functions[fi].compute_cost for fi in order),
    )


def sequence_for(graph: NetworkGraph) -> VariableSequence:
    return build_variable_sequence(graph, topological_order(graph))


class FootprintStats(NamedTuple):
    total_bytes: int
    max_function_bytes: int


def footprint_stats(seq: VariableSequence) -> FootprintStats:
    used = {o.var for o in seq.occurrences}
    total = sum(seq.sizes[v] for v in used)
    peak = max((seq.function_bytes(i) for i in range(seq.n_functions)), default=0)
    return FootprintStats(total, peak)


def graph_from_uses(uses: Iterable[Sequence[str]], sizes: dict[str, int],
                    outputs: Iterable[Sequence[str]] | None = None) -> NetworkGraph:
    """Small-graph helper: functions ``f1..fn`` with the given per-function uses."""
    uses = [tuple(u) for u in uses]
    outs = [tuple(o) for o in outputs] if outputs is not None else [()] * len(uses)
    fns = [FunctionNode(f"f{i + 1}", u, o) for i, (u, o) in enumerate(zip(uses, outs))]
    used = dict.fromkeys(v for u in uses for v in u)
    return NetworkGraph(tuple(VariableDecl(v, sizes[v]) for v in used), tuple(fns))

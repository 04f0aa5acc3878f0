"""Experiment configs, single runs, and grid sweeps producing CSV rows."""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Iterable

from .allocator import DEFAULT_CHUNK_BYTES, MIN_CHUNK_BYTES, DeviceOOM, make_allocator
from .baselines import LmsConfig, lms_schedule, naive_schedule
from .graph import NetworkGraph, footprint_stats, read_graph, sequence_for
from .scheduler import InfeasibleBudget, WindowConfig, build_schedule, validate_schedule
from .simulator import CostModel, lower_bounds, overlap_efficiency, simulate, timeline_jsonl
from .units import GiB, parse_size
from .workloads import WorkloadSpec, generate

__all__ = [
    "SCHEMA_VERSION",
    "COLUMNS",
    "ExperimentConfig",
    "run",
    "run_detailed",
    "expand_grid",
    "sweep",
    "rows_to_csv",
    "load_sweep",
]

SCHEMA_VERSION = 1

COLUMNS = (
    "schema_version", "config_hash", "graph", "arch", "scale", "scheduler", "window_bytes",
    "allocator", "chunk_bytes", "budget_bytes", "capacity_bytes", "status", "reason",
    "footprint_bytes", "max_function_bytes", "makespan_ns", "throughput", "total_stall_ns",
    "peak_resident_bytes", "peak_device_bytes", "peak_scheduled_bytes", "bytes_in", "bytes_out",
    "peak_internal_frag_bytes", "max_live_alloc_count", "compute_bound_ns", "transfer_bound_ns",
    "overlap_efficiency",
)

_SIZE_FIELDS = ("window_bytes", "budget_bytes", "capacity_bytes", "chunk_bytes", "min_chunk_bytes")


@dataclass(frozen=True)
class ExperimentConfig:
    graph_path: str | None = None
    workload: WorkloadSpec | None = None
    scheduler: str = "window"
    window_bytes: int = 2 * GiB
    lms_threshold: int = 1
    lms_ahead: int = 1
    lms_literal_le: bool = False
    allocator: str = "va"
    chunk_bytes: int = DEFAULT_CHUNK_BYTES
    min_chunk_bytes: int = MIN_CHUNK_BYTES
    full_coalesce: bool = False
    budget_bytes: int = 16 * GiB
    capacity_bytes: int = 16 * GiB
    cost: CostModel = field(default_factory=CostModel)
    items_per_step: float = 1.0
    trace_path: str | None = None

    def __post_init__(self) -> None:
        if self.scheduler not in ("window", "naive", "lms"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.allocator not in ("va", "bestfit"):
            raise ValueError(f"unknown allocator {self.allocator!r}")
        if (self.graph_path is None) == (self.workload is None):
            raise ValueError("exactly one of graph_path and workload must be given")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["workload"] = self.workload.to_dict() if self.workload else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        if isinstance(d.get("workload"), dict):
            d["workload"] = WorkloadSpec.from_dict(d["workload"])
        if isinstance(d.get("cost"), dict):
            d["cost"] = CostModel(**d["cost"])
        for k in _SIZE_FIELDS:
            if k in d:
                d[k] = parse_size(d[k])
        return cls(**d)

    def hash(self) -> str:
        """Stable hash of everything that affects the metrics (output paths excluded)."""
        d = self.to_dict()
        d.pop("trace_path")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def build_graph(self) -> NetworkGraph:
        return read_graph(self.graph_path) if self.graph_path else generate(self.workload)


def _schedule(cfg: ExperimentConfig, graph: NetworkGraph, seq):
    if cfg.scheduler == "window":
        return build_schedule(seq, WindowConfig(cfg.window_bytes, cfg.budget_bytes))
    if cfg.scheduler == "naive":
        sched = naive_schedule(seq)
    else:
        sched = lms_schedule(graph, seq, LmsConfig(cfg.lms_threshold, cfg.lms_ahead, cfg.lms_literal_le))
    rep = validate_schedule(sched, seq, cfg.budget_bytes)
    if not rep.ok:
        # baselines ignore the budget; exceeding it is their infeasibility
        v = rep.first
        raise InfeasibleBudget(v.function, seq.function_ids[v.function], rep.peak_resident_bytes, cfg.budget_bytes)
    return sched


def run_detailed(cfg: ExperimentConfig) -> tuple[dict, Any]:
    """Run one experiment; returns ``(row, SimulationResult or None)``."""
    graph = cfg.build_graph()
    seq = sequence_for(graph)
    fp = footprint_stats(seq)
    wl = cfg.workload
    row: dict[str, Any] = {c: "" for c in COLUMNS}
    row.update(
        schema_version=SCHEMA_VERSION,
        config_hash=cfg.hash(),
        graph=cfg.graph_path or "",
        arch=(f"{wl.arch}+train" if wl.train_mirror else wl.arch) if wl else "",
        scale=wl.scale if wl else "",
        scheduler=cfg.scheduler,
        window_bytes=cfg.window_bytes if cfg.scheduler == "window" else "",
        allocator=cfg.allocator,
        chunk_bytes=cfg.chunk_bytes if cfg.allocator == "va" else "",
        budget_bytes=cfg.budget_bytes,
        capacity_bytes=cfg.capacity_bytes,
        footprint_bytes=fp.total_bytes,
        max_function_bytes=fp.max_function_bytes,
    )
    alloc = make_allocator(cfg.allocator, cfg.capacity_bytes, cfg.chunk_bytes, cfg.min_chunk_bytes,
                           cfg.full_coalesce)
    bounds = lower_bounds(seq, cfg.cost, alloc)
    row.update(compute_bound_ns=bounds.compute_bound, transfer_bound_ns=bounds.transfer_bound)
    try:
        sched = _schedule(cfg, graph, seq)
        res = simulate(seq, sched, cfg.cost, alloc, cfg.budget_bytes, cfg.items_per_step,
                       record_timeline=cfg.trace_path is not None)
    except (InfeasibleBudget, DeviceOOM) as e:
        row.update(status=type(e).__name__, reason=str(e))
        st = alloc.stats()
        row.update(peak_device_bytes=st.peak_device_bytes, max_live_alloc_count=st.max_live_alloc_count,
                   peak_internal_frag_bytes=st.peak_internal_frag_bytes)
        return row, None
    st = res.allocator_stats
    row.update(
        status="ok",
        makespan_ns=res.makespan,
        throughput=f"{res.throughput:.6g}",
        total_stall_ns=res.total_stall,
        peak_resident_bytes=res.peak_resident_bytes,
        peak_device_bytes=res.peak_device_bytes,
        peak_scheduled_bytes=sched.stats.peak_scheduled_resident_bytes,
        bytes_in=res.bytes_in,
        bytes_out=res.bytes_out,
        peak_internal_frag_bytes=st.peak_internal_frag_bytes,
        max_live_alloc_count=st.max_live_alloc_count,
        overlap_efficiency=f"{overlap_efficiency(res, bounds):.6f}",
    )
    if cfg.trace_path:
        with open(cfg.trace_path, "w", encoding="utf-8") as fh:
            for line in timeline_jsonl(res.timeline):
                fh.write(line + "\n")
    return row, res


def run(cfg: ExperimentConfig) -> dict:
    return run_detailed(cfg)[0]


# ── sweeps ──────────────────────────────────────────────────────────────


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        if d.get(k) is None:
            d[k] = {}
        d = d[k]
    d[keys[-1]] = value


def expand_grid(base: dict, grid: dict[str, list] | None = None,
                points: list[dict] | None = None) -> list[ExperimentConfig]:
    """Cartesian product of ``grid`` axes (in the given key order) over ``base``.

    Keys may be dotted (``"workload.scale"``). An empty grid has no points;
    ``points`` lists explicit override dicts instead.
    """
    if points is None:
        if not grid:
            return []
        axes = list(grid.items())
        points = [dict(zip([k for k, _ in axes], combo)) for combo in itertools.product(*[v for _, v in axes])]
    out = []
    for p in points:
        d = copy.deepcopy(base)
        for k, v in p.items():
            _set_path(d, k, v)
        out.append(ExperimentConfig.from_dict(d))
    return out


def sweep(configs: Iterable[ExperimentConfig], workers: int = 1) -> list[dict]:
    """Run every config; rows come back in input order, failures included."""
    configs = list(configs)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run, configs))
    return [run(c) for c in configs]


def rows_to_csv(rows: Iterable[dict], fh: io.TextIOBase | None = None) -> str:
    buf = fh or io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue() if fh is None else ""


def load_sweep(text: str) -> list[ExperimentConfig]:
    """Parse a sweep document: ``{"base": {...}, "grid": {...}}`` or ``{"base": ..., "points": [...]}``."""
    doc = json.loads(text)
    return expand_grid(doc.get("base", {}), doc.get("grid"), doc.get("points"))


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)

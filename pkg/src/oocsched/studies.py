"""Canned studies: allocator peak vs scale, window vs naive, overlap at high oversubscription.

Each study returns plain rows so scripts can print them and tests can assert on them.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .allocator import DEFAULT_CHUNK_BYTES, MIN_CHUNK_BYTES, DeviceOOM, make_allocator
from .baselines import naive_schedule
from .graph import footprint_stats, sequence_for
from .scheduler import InfeasibleBudget, WindowConfig, build_schedule, validate_schedule
from .simulator import CostModel, calibrate_compute, simulate
from .units import GiB, MiB
from .workloads import WorkloadSpec, generate, resnet50_like

__all__ = ["ScalePoint", "allocator_scale_sweep", "window_vs_naive", "OverlapResult", "overlap_retention"]


@dataclass(frozen=True)
class ScalePoint:
    scale: float
    allocator: str
    status: str
    peak_device_bytes: int
    max_live_alloc_count: int
    footprint_bytes: int


def _run_window(seq, window, budget, allocator, cost):
    sched = build_schedule(seq, WindowConfig(window, budget))
    return simulate(seq, sched, cost, allocator, budget, record_timeline=False)


def allocator_scale_sweep(scales=tuple(range(8, 129, 8)), budget=8 * GiB, capacity=16 * GiB,
                          window=None, depth=50, base_bytes=16 * MiB, param_bytes=8 * MiB, seed=0,
                          chunk_bytes=DEFAULT_CHUNK_BYTES, cost=CostModel()) -> list[ScalePoint]:
    """Window scheduler on a training-step chain at growing batch scale, under both allocators."""
    window = budget // 2 if window is None else window
    out = []
    for s in scales:
        spec = WorkloadSpec("chain", depth, base_bytes, s, param_bytes, train_mirror=True, seed=seed)
        seq = sequence_for(generate(spec))
        fp = footprint_stats(seq).total_bytes
        for kind in ("bestfit", "va"):
            alloc = make_allocator(kind, capacity, chunk_bytes)
            try:
                _run_window(seq, window, budget, alloc, cost)
                status = "ok"
            except (InfeasibleBudget, DeviceOOM) as e:
                status = type(e).__name__
            st = alloc.stats()
            out.append(ScalePoint(s, kind, status, st.peak_device_bytes, st.max_live_alloc_count, fp))
    return out


def _best_window(seq, budget, cost, fractions, capacity, chunk_bytes):
    best = None
    for f in fractions:
        try:
            r = _run_window(seq, max(1, int(budget * f)), budget, make_allocator("va", capacity, chunk_bytes), cost)
        except (InfeasibleBudget, DeviceOOM):
            continue
        if best is None or r.makespan < best[1]:
            best = (f, r.makespan)
    return best


def window_vs_naive(archs=("chain", "dense_skip", "unet"), scales=(1, 4), budget_fractions=(0.3, 0.5),
                    depth=12, base_bytes=4 * MiB, param_bytes=1 * MiB,
                    window_fractions=(1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0),
                    chunk_bytes=MIN_CHUNK_BYTES) -> list[dict]:
    """Best swept window vs the naive heuristic at equal budget, compute calibrated to transfer.

    Both run on the VA allocator; the default chunk is the 2 MiB floor because
    these tensors are only a few MiB.
    """
    rows = []
    for arch in archs:
        for s in scales:
            seq = sequence_for(generate(WorkloadSpec(arch, depth, base_bytes, s, param_bytes, train_mirror=True)))
            fp = footprint_stats(seq)
            cost = calibrate_compute(seq, CostModel())
            for bf in budget_fractions:
                budget = max(fp.max_function_bytes, int(fp.total_bytes * bf))
                capacity = 4 * budget
                row = {"arch": arch, "scale": s, "budget_bytes": budget, "naive": None, "window": None,
                       "best_fraction": None}
                naive = naive_schedule(seq)
                if validate_schedule(naive, seq, budget).ok:
                    try:
                        row["naive"] = simulate(seq, naive, cost, make_allocator("va", capacity, chunk_bytes), budget,
                                                record_timeline=False).makespan
                    except DeviceOOM:
                        pass
                best = _best_window(seq, budget, cost, window_fractions, capacity, chunk_bytes)
                if best is not None:
                    row["best_fraction"], row["window"] = best
                rows.append(row)
    return rows


@dataclass(frozen=True)
class OverlapResult:
    oversubscription: float
    reference_makespan: int
    makespan: int
    window_bytes: int
    budget_bytes: int

    @property
    def retention(self) -> float:
        return self.reference_makespan / self.makespan


def overlap_retention(scale: float = 1.0, oversubscription: float = 7.5, window_fraction: float = 1 / 8,
                      capacity_factor: float = 2.0) -> OverlapResult:
    """Throughput retained by the window scheduler on the ResNet-50-like preset.

    Compute is calibrated so the compute and transfer lower bounds match; the
    reference run holds the whole footprint on device.
    """
    seq = sequence_for(generate(resnet50_like(scale)))
    fp = footprint_stats(seq).total_bytes
    cost = calibrate_compute(seq, CostModel())
    cap = int(fp * capacity_factor)
    ref = _run_window(seq, fp, fp, make_allocator("va", cap), cost).makespan
    budget = int(fp / oversubscription)
    window = max(1, int(budget * window_fraction))
    got = _run_window(seq, window, budget, make_allocator("va", cap), cost).makespan
    return OverlapResult(fp / budget, ref, got, window, budget)


def with_cost(cost: CostModel, **kw) -> CostModel:
    return replace(cost, **kw)

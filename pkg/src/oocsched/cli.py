"""Command line: ``gen``, ``run``, ``sweep`` and ``validate``.

Exit codes: 0 success, 2 when a run/sweep produced InfeasibleBudget or
DeviceOOM rows (or a schedule failed validation), 1 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import ExperimentConfig, load_sweep, rows_to_csv, run_detailed, sweep
from .graph import ParseError, ValidationError, dump_graph, read_graph, sequence_for
from .scheduler import Schedule, validate_schedule
from .simulator import CostModel
from .units import parse_size
from .workloads import InvalidSpec, WorkloadSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_FAILURES = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(s: str) -> int:
    try:
        return parse_size(s)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oocsched", description="Out-of-core swap scheduling simulator.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic graph document")
    g.add_argument("--arch", choices=["chain", "dense_skip", "unet"], default="chain")
    g.add_argument("--depth", type=int, default=8)
    g.add_argument("--base-bytes", type=_size, default="4MiB")
    g.add_argument("--param-bytes", type=_size, default="1MiB")
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--train-mirror", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="schedule and simulate one graph")
    r.add_argument("--graph", required=True)
    r.add_argument("--scheduler", choices=["window", "naive", "lms"], default="window")
    r.add_argument("--window", type=_size, default="2GiB")
    r.add_argument("--lms-threshold", type=int, default=1)
    r.add_argument("--lms-ahead", type=int, default=1)
    r.add_argument("--lms-literal-le", action="store_true")
    r.add_argument("--budget", type=_size, default="16GiB")
    r.add_argument("--capacity", type=_size, default="16GiB", help="physical device memory")
    r.add_argument("--allocator", choices=["va", "bestfit"], default="va")
    r.add_argument("--chunk", type=_size, default="40MiB")
    r.add_argument("--min-chunk", type=_size, default="2MiB")
    r.add_argument("--full-coalesce", action="store_true")
    r.add_argument("--h2d", type=float, default=50e9, help="bytes/s")
    r.add_argument("--d2h", type=float, default=50e9, help="bytes/s")
    r.add_argument("--compute-s-per-byte", type=float, default=0.02e-9)
    r.add_argument("--compute-fixed", type=float, default=0.0, help="seconds per function")
    r.add_argument("--transfer-fixed", type=float, default=0.0, help="seconds per transfer")
    r.add_argument("--map-cost", type=float, default=0.0, help="seconds per mapped chunk")
    r.add_argument("--single-channel", action="store_true")
    r.add_argument("--items-per-step", type=float, default=1.0)
    r.add_argument("--out", required=True, help="CSV output")
    r.add_argument("--trace", help="timeline JSONL output")
    r.add_argument("--schedule-out", help="schedule JSON output")

    s = sub.add_parser("sweep", help="run a grid of experiments")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)

    v = sub.add_parser("validate", help="replay-check a schedule against a graph")
    v.add_argument("--graph", required=True)
    v.add_argument("--schedule", required=True)
    v.add_argument("--budget", type=_size, default=None)
    return p


def _cmd_gen(a) -> int:
    spec = WorkloadSpec(a.arch, a.depth, a.base_bytes, a.scale, a.param_bytes, a.train_mirror, a.seed)
    graph = generate(spec)
    Path(a.out).write_text(dump_graph(graph, indent=1), encoding="utf-8")
    print(f"wrote {a.out}: {len(graph.functions)} functions, {len(graph.variables)} variables")
    return EXIT_OK


def _cmd_run(a) -> int:
    cost = CostModel.from_si(a.h2d, a.d2h, a.compute_s_per_byte, a.compute_fixed, a.transfer_fixed,
                             a.map_cost, a.single_channel)
    cfg = ExperimentConfig(
        graph_path=a.graph, scheduler=a.scheduler, window_bytes=a.window, lms_threshold=a.lms_threshold,
        lms_ahead=a.lms_ahead, lms_literal_le=a.lms_literal_le, allocator=a.allocator,
        chunk_bytes=a.chunk, min_chunk_bytes=a.min_chunk, full_coalesce=a.full_coalesce,
        budget_bytes=a.budget, capacity_bytes=a.capacity, cost=cost, items_per_step=a.items_per_step,
        trace_path=a.trace,
    )
    row, _ = run_detailed(cfg)
    with open(a.out, "w", encoding="utf-8", newline="") as fh:
        rows_to_csv([row], fh)
    if a.schedule_out and row["status"] == "ok":
        from .experiment import _schedule

        graph = cfg.build_graph()
        seq = sequence_for(graph)
        Path(a.schedule_out).write_text(_schedule(cfg, graph, seq).to_json(indent=1), encoding="utf-8")
    print(f"{row['status']}: makespan_ns={row['makespan_ns']} peak_device_bytes={row['peak_device_bytes']}"
          + (f" ({row['reason']})" if row["reason"] else ""))
    return EXIT_OK if row["status"] == "ok" else EXIT_FAILURES


def _cmd_sweep(a) -> int:
    configs = load_sweep(Path(a.config).read_text(encoding="utf-8"))
    rows = sweep(configs, a.workers)
    with open(a.out, "w", encoding="utf-8", newline="") as fh:
        rows_to_csv(rows, fh)
    cfg_path = Path(a.out).with_suffix(".configs.jsonl")
    with open(cfg_path, "w", encoding="utf-8") as fh:
        for c in configs:
            fh.write(json.dumps({"config_hash": c.hash(), "config": c.to_dict()}) + "\n")
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} rows ({failed} failed) -> {a.out}")
    return EXIT_FAILURES if failed else EXIT_OK


def _cmd_validate(a) -> int:
    graph = read_graph(a.graph)
    seq = sequence_for(graph)
    sched = Schedule.from_json(Path(a.schedule).read_text(encoding="utf-8"))
    rep = validate_schedule(sched, seq, a.budget)
    if rep.ok:
        print(f"ok: peak scheduled resident {rep.peak_resident_bytes} B")
        return EXIT_OK
    for viol in rep.violations:
        print(f"check {viol.check} at function {viol.function}: {viol.message}")
    return EXIT_FAILURES


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"gen": _cmd_gen, "run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate}[args.cmd]
    try:
        return handler(args)
    except (ParseError, ValidationError, InvalidSpec, ValueError, OSError, KeyError) as e:
        print(f"oocsched {args.cmd}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

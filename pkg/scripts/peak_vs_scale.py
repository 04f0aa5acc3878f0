"""Peak device memory of best-fit vs VA allocation as batch scale grows at a fixed budget.

Prints one row per (scale, allocator) and optionally writes a CSV.
"""
import argparse
import csv
import sys

from oocsched.studies import allocator_scale_sweep
from oocsched.units import GiB, parse_size


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--budget", default="8GiB")
    ap.add_argument("--capacity", default="16GiB")
    ap.add_argument("--scales", default="8:129:8", help="start:stop:step")
    ap.add_argument("--out", help="CSV path")
    args = ap.parse_args()
    budget, capacity = parse_size(args.budget), parse_size(args.capacity)
    start, stop, step = (int(x) for x in args.scales.split(":"))
    rows = allocator_scale_sweep(range(start, stop, step), budget=budget, capacity=capacity)
    print(f"{'scale':>6} {'allocator':>9} {'status':>16} {'peak/budget':>12} {'max_live':>9}")
    for p in rows:
        print(f"{p.scale:>6} {p.allocator:>9} {p.status:>16} {p.peak_device_bytes / budget:>12.3f} "
              f"{p.max_live_alloc_count:>9}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scale", "allocator", "status", "peak_device_bytes", "max_live_alloc_count",
                        "footprint_bytes", "budget_bytes"])
            for p in rows:
                w.writerow([p.scale, p.allocator, p.status, p.peak_device_bytes, p.max_live_alloc_count,
                            p.footprint_bytes, budget])
    print(f"budget {budget / GiB:.1f} GiB, capacity {capacity / GiB:.1f} GiB", file=sys.stderr)


if __name__ == "__main__":
    main()

"""Regenerate tests/data/oracle_golden.csv.

Every 3-function graph with 1-2 variables per function, variable sizes in
{1, 2} and budgets {2, 3, 4}, solved by the exhaustive oracle under the unit
cost model (1 ns per byte for compute and for each transfer direction).
"""
import argparse
import csv
import json
from pathlib import Path

from oocsched.oracle import InfeasibleInstance, brute_force_schedule, instance_hash, tiny_instances

BUDGETS = (2, 3, 4)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data" / "oracle_golden.csv"))
    args = ap.parse_args()
    rows = []
    for uses, sizes, seq in tiny_instances():
        h = instance_hash(seq)
        for b in BUDGETS:
            try:
                best = brute_force_schedule(seq, b).optimal_makespan
            except InfeasibleInstance:
                best = "infeasible"
            rows.append({"instance_hash": h, "budget": b, "optimal_makespan": best,
                         "uses": json.dumps(uses, separators=(",", ":")),
                         "bytes": json.dumps(sizes, separators=(",", ":"))})
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"{len(rows)} rows -> {args.out}")


if __name__ == "__main__":
    main()

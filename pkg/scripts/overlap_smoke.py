"""Throughput retention at high oversubscription on the ResNet-50-like preset, per window size."""
import argparse

from oocsched.studies import overlap_retention


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--oversubscription", type=float, default=7.5)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    print(f"{'window/budget':>13} {'retention':>9}")
    for frac in (1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0):
        r = overlap_retention(args.scale, args.oversubscription, frac)
        print(f"{frac:>13.4g} {r.retention:>9.3f}")
    print(f"oversubscription {r.oversubscription:.2f}x, budget {r.budget_bytes} B")


if __name__ == "__main__":
    main()

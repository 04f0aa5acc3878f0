"""Best swept schedule window vs the naive swap-everything heuristic at equal budget."""
import argparse

from oocsched.studies import window_vs_naive


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--archs", default="chain,dense_skip,unet")
    ap.add_argument("--scales", default="1,4")
    ap.add_argument("--budget-fractions", default="0.3,0.5", help="budget as a fraction of the footprint")
    args = ap.parse_args()
    rows = window_vs_naive(tuple(args.archs.split(",")), tuple(float(s) for s in args.scales.split(",")),
                           tuple(float(b) for b in args.budget_fractions.split(",")))
    print(f"{'arch':>10} {'scale':>5} {'budget MB':>10} {'naive ms':>9} {'window ms':>9} {'best frac':>9} {'speedup':>7}")
    for r in rows:
        naive = f"{r['naive'] / 1e6:.2f}" if r["naive"] is not None else "infeas"
        win = f"{r['window'] / 1e6:.2f}" if r["window"] is not None else "infeas"
        sp = f"{r['naive'] / r['window']:.2f}" if r["naive"] and r["window"] else "-"
        frac = f"{r['best_fraction']:.4g}" if r["best_fraction"] is not None else "-"
        print(f"{r['arch']:>10} {r['scale']:>5g} {r['budget_bytes'] / 1e6:>10.1f} {naive:>9} {win:>9} {frac:>9} {sp:>7}")


if __name__ == "__main__":
    main()

"""3D CFM vs per-height 2D CFM vs PFL on synthetic held-out states.

    python scripts/baseline_comparison.py
    python scripts/baseline_comparison.py --robot kuka30 --seeds 10
"""

import argparse

import numpy as np

from cfm3d.evaluation import report_table
from cfm3d.presets import NAMES
from cfm3d.studies import baseline_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--robot", choices=NAMES, default="ur10e")
    ap.add_argument("--seeds", type=int, default=1, help="number of synthetic campaigns (count)")
    ap.add_argument("--noise", type=float, default=None, help="force noise SD (N); default per robot")
    args = ap.parse_args()

    first = baseline_comparison(0, args.noise, name=args.robot)
    print(report_table(first.reports, first.worse))
    if args.seeds > 1:
        gaps, pfl_both = [], 0
        for seed in range(args.seeds):
            rep = baseline_comparison(seed, args.noise, name=args.robot).reports
            gaps.append(rep["2D CFM"].mean_ue_n - rep["3D CFM"].mean_ue_n)
            pfl_both += rep["PFL"].n_under > 0 and rep["PFL"].n_over > 0
        gaps = np.array(gaps)
        print(f"mean UE gap 2D - 3D over {args.seeds} seeds: {gaps.mean():.2f} N "
              f"(min {gaps.min():.2f}); 2D worse in {int((gaps > 0).sum())}/{args.seeds}; "
              f"PFL under- and overestimates in {pfl_both}/{args.seeds}")


if __name__ == "__main__":
    main()

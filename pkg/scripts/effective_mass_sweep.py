"""Effective mass of the 3-link stand-in arm over the workspace.

Sweeps a dense (d, h) grid for both link inertia models, prints the
coarse map, and reports where along each height row the effective mass
stops falling with distance (the stretched-out arm near full reach).

    python scripts/effective_mass_sweep.py
    python scripts/effective_mass_sweep.py --csv sweep.csv
"""

import argparse

import numpy as np

from cfm3d.dataio import GridSpec
from cfm3d.mechanics import (
    INERTIA_MODELS,
    INSPECTION_GRID,
    THREE_LINK_ARM,
    PlanarArm,
    effective_mass_map,
    wrist_reach_fraction,
)
from cfm3d.prediction import map_to_csv, map_to_grid


def first_reversal(arm, wmap):
    """Smallest wrist reach fraction at which some row starts rising with d."""
    worst = np.inf
    for i, h in enumerate(wmap.heights_m):
        row = wmap.values[i]
        for j in range(1, len(row)):
            if np.isfinite(row[j - 1]) and np.isfinite(row[j]) and row[j] > row[j - 1] + 1e-12:
                worst = min(worst, wrist_reach_fraction(arm, wmap.distances_m[j - 1], h))
                break
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--step", type=float, default=0.01, help="grid spacing (m)")
    ap.add_argument("--csv", help="write the dense uniform-rod map here")
    args = ap.parse_args()

    print(map_to_grid(effective_mass_map(THREE_LINK_ARM, INSPECTION_GRID)))
    d = tuple(np.round(np.arange(0.5, 0.95 + 1e-9, args.step), 6))
    h = tuple(np.round(np.arange(0.1, 0.5 + 1e-9, args.step), 6))
    for model in INERTIA_MODELS:
        arm = PlanarArm(THREE_LINK_ARM.link_lengths_m, THREE_LINK_ARM.link_masses_kg, model)
        wmap = effective_mass_map(arm, GridSpec(d, h))
        vals = wmap.values[np.isfinite(wmap.values)]
        print(f"{model}: {vals.size} reachable cells, m_u in [{vals.min():.3f}, {vals.max():.3f}] kg, "
              f"first rise with d at wrist reach fraction {first_reversal(arm, wmap):.3f}")
        if args.csv and model == "uniform-rod":
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write(map_to_csv(wmap))


if __name__ == "__main__":
    main()

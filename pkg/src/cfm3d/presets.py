"""Published 3D CFM coefficient sets and the measurement grids they were fitted on."""

from cfm3d.dataio import GridSpec, MeasurementSet
from cfm3d.fitting import CFM3D_TERMS, CFMModel, Domain, TermSpec

VELOCITIES = (0.20, 0.25, 0.30, 0.35, 0.40)
TRAIN_VELOCITIES = (0.20, 0.30, 0.40)
HEIGHTS = (0.14, 0.22, 0.30, 0.38, 0.46)
TRAIN_HEIGHTS = (0.14, 0.30, 0.46)

UR10E_DISTANCES = (0.52, 0.61, 0.70, 0.79, 0.88)
KUKA_DISTANCES = (0.56, 0.635, 0.71, 0.785, 0.86)

UR10E_GRID = GridSpec(UR10E_DISTANCES, HEIGHTS, VELOCITIES)
KUKA_GRID = GridSpec(KUKA_DISTANCES, HEIGHTS, VELOCITIES)
UR10E_TRAIN_GRID = GridSpec(UR10E_DISTANCES[::2], TRAIN_HEIGHTS, TRAIN_VELOCITIES)
KUKA_TRAIN_GRID = GridSpec(KUKA_DISTANCES[::2], TRAIN_HEIGHTS, TRAIN_VELOCITIES)

# Positions skipped during the UR10e campaign (d, h).
UR10E_MISSING_POSITIONS = ((0.61, 0.30), (0.79, 0.30))

# Coefficient order: 1, v, d, d^2, d*h, h^2, d^2*v, d*v^2, d*h^2
_NAMED_ORDER = ("1", "v", "d", "d^2", "d*h", "h^2", "d^2*v", "d*v^2", "d*h^2")
_COEFFICIENTS = {
    "ur10e": (6.2990, 3.3761, -1.1050, -1.3066, -1.5258, -6.6954, 4.0919, -6.0090, 8.5207),
    "kuka30": (7.0641, 4.2943, -4.5286, 0.9917, -0.5795, -6.0074, 3.9366, -7.2169, 7.0446),
    "kuka10": (6.6936, 4.9297, -4.4782, 1.2926, -0.3758, -5.5669, 3.2609, -7.2332, 6.4016),
}
_GRIDS = {"ur10e": UR10E_GRID, "kuka30": KUKA_GRID, "kuka10": KUKA_GRID}
TRAIN_GRIDS = {"ur10e": UR10E_TRAIN_GRID, "kuka30": KUKA_TRAIN_GRID, "kuka10": KUKA_TRAIN_GRID}
# Mean SD of repeated measurements at one state, in newtons.
REPEAT_SD_N = {"ur10e": 1.12, "kuka30": 0.58}
# Moving mass of each robot (kg).
MOVING_MASS_KG = {"ur10e": 30.0, "kuka30": 20.0, "kuka10": 20.0}
NAMES = tuple(_COEFFICIENTS)


def _grid_domain(grid: GridSpec) -> Domain:
    return Domain((grid.distances_m[0], grid.distances_m[-1]), (grid.heights_m[0], grid.heights_m[-1]),
                  (grid.velocities_mps[0], grid.velocities_mps[-1]))


def published_model(name: str) -> CFMModel:
    """One of ``ur10e``, ``kuka30``, ``kuka10``."""
    try:
        coefs = _COEFFICIENTS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {', '.join(NAMES)}") from None
    by_term = {TermSpec.parse(n): c for n, c in zip(_NAMED_ORDER, coefs)}
    return CFMModel(tuple(CFM3D_TERMS), tuple(by_term[t] for t in CFM3D_TERMS), _grid_domain(_GRIDS[name]), name)


def measurement_grid(name: str) -> GridSpec:
    return _GRIDS[name]


def drop_missing_positions(mset: MeasurementSet, positions=UR10E_MISSING_POSITIONS, tol=1e-6) -> MeasurementSet:
    keep = [s for s in mset.samples
            if not any(abs(s.distance_m - d) <= tol and abs(s.height_m - h) <= tol for d, h in positions)]
    return mset.with_samples(keep, f"drop_missing_positions({len(mset) - len(keep)} removed)")

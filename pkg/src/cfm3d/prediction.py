"""Evaluate force models, invert them for safe speeds, and build workspace maps."""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from cfm3d.dataio import GridSpec
from cfm3d.errors import (
    ContractError,
    ExtrapolationWarning,
    InfeasibleError,
    VelocityIndependentError,
)
from cfm3d.fitting import CFMModel

DEFAULT_MARGIN = 1.10
COEF_EPS = 1e-12


def predict_force(model: CFMModel, d, h, v):
    """Peak impact force in newtons, ``exp`` of the model's linear predictor.

    Accepts scalars or broadcastable arrays. Evaluating outside the training
    box is allowed but raises an :class:`ExtrapolationWarning`.
    """
    d, h, v = (np.asarray(x, dtype=float) for x in (d, h, v))
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(h)) and np.all(np.isfinite(v))):
        raise ContractError("query point must be finite")
    if not np.all(model.in_domain(d, h, v)):
        warnings.warn(ExtrapolationWarning(f"{model.label or 'model'} evaluated outside its fitted domain"),
                      stacklevel=2)
    out = np.exp(model.linear_predictor(d, h, v))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SafetyQuery:
    force_limit_n: float
    margin_factor: float = DEFAULT_MARGIN
    distance_m: float | None = None
    height_m: float | None = None

    def __post_init__(self):
        if not self.force_limit_n > 0:
            raise ContractError("force_limit_n must be > 0")
        if not self.margin_factor >= 1:
            raise ContractError("margin_factor must be >= 1")

    def at(self, d: float, h: float) -> SafetyQuery:
        return SafetyQuery(self.force_limit_n, self.margin_factor, d, h)


@dataclass(frozen=True)
class SafeVelocity:
    velocity_mps: float
    clamped: bool = False        # limited by the top of the fitted velocity range
    extrapolated: bool = False   # the returned state lies outside the fitted domain

    def __float__(self):
        return self.velocity_mps


def _smallest_positive_root(a: float, b: float, c: float) -> float | None:
    """Smallest root > 0 of c v^2 + b v + a, or None."""
    if abs(c) <= COEF_EPS:
        if b > 0 and a <= 0:
            return -a / b
        return None
    disc = b * b - 4.0 * c * a
    if disc < 0:
        return None
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = []
    if q != 0:
        roots += [q / c, a / q]
    else:
        roots += [0.0]
    pos = [r for r in roots if r >= 0]
    return min(pos) if pos else None


def max_safe_velocity(model: CFMModel, query: SafetyQuery) -> SafeVelocity:
    """Highest speed whose margin-inflated predicted force stays within the limit.

    Solves ``C v^2 + B v + A = ln(limit / margin)`` at the query position and
    takes the smallest positive root, i.e. the first crossing on the branch
    where force grows with speed. Speeds above the fitted velocity range are
    clamped to its upper end; the lower end is not enforced (lowering speed
    only lowers force), but such results are marked as extrapolated.
    """
    d, h = query.distance_m, query.height_m
    if d is None or h is None:
        raise ContractError("query needs a distance and a height")
    a, b, c = (float(x) for x in model.velocity_polynomial(d, h))
    if abs(b) <= COEF_EPS and abs(c) <= COEF_EPS:
        raise VelocityIndependentError("model force does not depend on velocity")
    target = math.log(query.force_limit_n / query.margin_factor)
    a0 = a - target
    if a0 > 0:
        raise InfeasibleError(
            f"predicted force {math.exp(a) * query.margin_factor:.6g} N (with margin) already exceeds "
            f"{query.force_limit_n:g} N as v -> 0 at d={d:g}, h={h:g}")
    root = _smallest_positive_root(a0, b, c)
    v_hi = model.domain.velocity_mps[1]
    clamped = False
    if root is None or root > v_hi:
        root, clamped = v_hi, True
    extrapolated = not bool(model.in_domain(d, h, root))
    return SafeVelocity(root, clamped, extrapolated)


def velocity_monotone(model: CFMModel, n: int = 21) -> bool:
    """True when d(ln F)/dv > 0 throughout the model's domain box (sampled)."""
    dom = model.domain
    d, h, v = np.meshgrid(np.linspace(*dom.distance_m, n), np.linspace(*dom.height_m, n),
                          np.linspace(*dom.velocity_mps, n), indexing="ij")
    _, b, c = model.velocity_polynomial(d, h)
    return bool(np.all(b + 2 * c * v > 0))


# -- workspace maps ------------------------------------------------------------

@dataclass(frozen=True)
class WorkspaceMap:
    """Scalar field over a (distance, height) grid.

    ``values[i, j]`` belongs to ``heights_m[i]``, ``distances_m[j]``. Cells
    without a usable value hold NaN and carry a sentinel flag such as
    ``"unsafe"`` or ``"unreachable"`` in ``flags[i][j]``.
    """

    distances_m: tuple[float, ...]
    heights_m: tuple[float, ...]
    values: np.ndarray
    flags: tuple[tuple[str, ...], ...]
    kind: str
    unit: str
    label: str = ""
    velocity_mps: float | None = None
    meta: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        shape = (len(self.heights_m), len(self.distances_m))
        if np.shape(self.values) != shape:
            raise ContractError(f"values shape {np.shape(self.values)} != grid {shape}")

    def value(self, d: float, h: float, tol: float = 1e-9) -> float:
        i = next(k for k, x in enumerate(self.heights_m) if abs(x - h) <= tol)
        j = next(k for k, x in enumerate(self.distances_m) if abs(x - d) <= tol)
        return float(self.values[i, j])

    def flag(self, d: float, h: float, tol: float = 1e-9) -> str:
        i = next(k for k, x in enumerate(self.heights_m) if abs(x - h) <= tol)
        j = next(k for k, x in enumerate(self.distances_m) if abs(x - d) <= tol)
        return self.flags[i][j]


def _join(*flags):
    return "|".join(f for f in flags if f)


def force_map(model: CFMModel, grid: GridSpec, v: float) -> WorkspaceMap:
    if not (grid.distances_m and grid.heights_m):
        raise ContractError("grid needs distance and height levels")
    d, h = np.meshgrid(grid.distances_m, grid.heights_m)
    values = np.exp(model.linear_predictor(d, h, v))
    inside = model.in_domain(d, h, v)
    flags = tuple(tuple("" if ok else "extrapolated" for ok in row) for row in inside)
    return WorkspaceMap(grid.distances_m, grid.heights_m, values, flags, "force-map", "N", model.label, v)


def speed_map(model: CFMModel, grid: GridSpec, query: SafetyQuery) -> WorkspaceMap:
    """Max safe velocity per (d, h) cell; infeasible cells are flagged ``unsafe``."""
    if not (grid.distances_m and grid.heights_m):
        raise ContractError("grid needs distance and height levels")
    values = np.full((len(grid.heights_m), len(grid.distances_m)), np.nan)
    flags = []
    for i, h in enumerate(grid.heights_m):
        row = []
        for j, d in enumerate(grid.distances_m):
            try:
                res = max_safe_velocity(model, query.at(d, h))
            except InfeasibleError:
                row.append("unsafe")
                continue
            values[i, j] = res.velocity_mps
            row.append(_join("clamped" if res.clamped else "", "extrapolated" if res.extrapolated else ""))
        flags.append(tuple(row))
    meta = (("force_limit_n", f"{query.force_limit_n:.9g}"), ("margin_factor", f"{query.margin_factor:.9g}"))
    return WorkspaceMap(grid.distances_m, grid.heights_m, values, tuple(flags), "speed-map", "m/s",
                        model.label, None, meta)


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _cell_text(value: float, flag: str) -> str:
    if np.isnan(value):
        return flag.split("|")[0] or "nan"
    if np.isinf(value):
        return "inf"
    return fmt(value)


def map_to_csv(wmap: WorkspaceMap) -> str:
    """One row per cell: ``distance_m,height_m,value,flags``. Sentinel cells print their flag as value."""
    buf = io.StringIO()
    buf.write("distance_m,height_m,value,flags\n")
    for i, h in enumerate(wmap.heights_m):
        for j, d in enumerate(wmap.distances_m):
            buf.write(f"{fmt(d)},{fmt(h)},{_cell_text(wmap.values[i, j], wmap.flags[i][j])},{wmap.flags[i][j]}\n")
    return buf.getvalue()


def map_to_grid(wmap: WorkspaceMap) -> str:
    """Matrix text: header comments, then a row of distances and one row per height."""
    buf = io.StringIO()
    buf.write(f"# kind: {wmap.kind}\n# unit: {wmap.unit}\n# label: {wmap.label}\n")
    if wmap.velocity_mps is not None:
        buf.write(f"# velocity_mps: {fmt(wmap.velocity_mps)}\n")
    for key, val in wmap.meta:
        buf.write(f"# {key}: {val}\n")
    buf.write("# rows: height_m; columns: distance_m\n")
    buf.write("\t".join(["h\\d"] + [fmt(d) for d in wmap.distances_m]) + "\n")
    for i, h in enumerate(wmap.heights_m):
        cells = [_cell_text(wmap.values[i, j], wmap.flags[i][j]) for j in range(len(wmap.distances_m))]
        buf.write("\t".join([fmt(h)] + cells) + "\n")
    return buf.getvalue()

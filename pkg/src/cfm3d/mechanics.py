"""Planar N-link manipulator: kinematics, joint-space inertia and effective mass.

Joints are revolute about the plane normal, the base sits at the origin,
x is horizontal distance and y is height. Gravity plays no role here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from cfm3d.dataio import GridSpec
from cfm3d.errors import ContractError, UnreachableError
from cfm3d.prediction import WorkspaceMap

INERTIA_MODELS = ("uniform-rod", "point-mass-at-tip")
INFINITE_THRESHOLD = 1e-12
DOWN = (0.0, -1.0)


@dataclass(frozen=True)
class PlanarArm:
    link_lengths_m: tuple[float, ...]
    link_masses_kg: tuple[float, ...]
    inertia_model: str = "uniform-rod"

    def __post_init__(self):
        object.__setattr__(self, "link_lengths_m", tuple(float(x) for x in self.link_lengths_m))
        object.__setattr__(self, "link_masses_kg", tuple(float(x) for x in self.link_masses_kg))
        if len(self.link_lengths_m) != len(self.link_masses_kg) or not self.link_lengths_m:
            raise ContractError("need equally many (>= 1) link lengths and masses")
        if min(self.link_lengths_m + self.link_masses_kg) <= 0:
            raise ContractError("link lengths and masses must be > 0")
        if self.inertia_model not in INERTIA_MODELS:
            raise ContractError(f"inertia_model must be one of {INERTIA_MODELS}")

    @property
    def n(self) -> int:
        return len(self.link_lengths_m)

    @property
    def com_offsets(self) -> np.ndarray:
        l = np.array(self.link_lengths_m)
        return l / 2 if self.inertia_model == "uniform-rod" else l

    @property
    def com_inertias(self) -> np.ndarray:
        if self.inertia_model == "point-mass-at-tip":
            return np.zeros(self.n)
        l, m = np.array(self.link_lengths_m), np.array(self.link_masses_kg)
        return m * l**2 / 12.0


# Three-link stand-in for a UR10e-class arm.
THREE_LINK_ARM = PlanarArm((0.5, 0.45, 0.05), (13.0, 4.0, 4.0))

# 3x3 inspection points, all reachable by THREE_LINK_ARM with the tool pointing down.
INSPECTION_GRID = GridSpec((0.5, 0.65, 0.8), (0.1, 0.25, 0.4))
# Cells whose wrist lies beyond this fraction of the two-link reach are near the
# stretched-out singularity, where effective mass climbs again.
INTERIOR_REACH_FRACTION = 0.8


def _angles(arm: PlanarArm, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.n,):
        raise ContractError(f"expected {arm.n} joint angles, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ContractError("joint angles must be finite")
    return q


def fk_planar(arm: PlanarArm, q) -> tuple[np.ndarray, float]:
    """End-effector position and orientation (sum of joint angles)."""
    th = np.cumsum(_angles(arm, q))
    l = np.array(arm.link_lengths_m)
    return np.array([l @ np.cos(th), l @ np.sin(th)]), float(th[-1])


def ik_planar3(arm: PlanarArm, target, ee_orientation: float = -math.pi / 2, elbow: str = "up") -> np.ndarray:
    """Closed-form inverse kinematics for a 3-link arm with fixed tool orientation.

    ``elbow="up"`` bends the second joint so the elbow lies above the
    shoulder-wrist line (negative second joint angle for targets ahead of the base).
    """
    if arm.n != 3:
        raise ContractError("ik_planar3 needs a 3-link arm")
    if elbow not in ("up", "down"):
        raise ContractError("elbow must be 'up' or 'down'")
    l1, l2, l3 = arm.link_lengths_m
    x, y = (float(c) for c in target)
    wx, wy = x - l3 * math.cos(ee_orientation), y - l3 * math.sin(ee_orientation)
    r = math.hypot(wx, wy)
    lo, hi = abs(l1 - l2), l1 + l2
    if r > hi or r < lo:
        raise UnreachableError(r - hi if r > hi else lo - r)
    c2 = max(-1.0, min(1.0, (r * r - l1 * l1 - l2 * l2) / (2 * l1 * l2)))
    s2 = math.sqrt(max(0.0, 1.0 - c2 * c2))
    if elbow == "up":
        s2 = -s2
    t2 = math.atan2(s2, c2)
    t1 = math.atan2(wy, wx) - math.atan2(l2 * s2, l1 + l2 * c2)
    return np.array([t1, t2, ee_orientation - t1 - t2])


def _point_jacobian(arm: PlanarArm, th: np.ndarray, link: int, offset: float) -> np.ndarray:
    """2 x N linear-velocity Jacobian of a point ``offset`` along ``link``."""
    l = np.array(arm.link_lengths_m)
    reach = np.append(l[:link], offset)  # segment lengths from each joint up to the point
    angles = th[: link + 1]
    seg = np.stack([reach * np.cos(angles), reach * np.sin(angles)])
    # Column j sums the segments from joint j outward, rotated by 90 degrees.
    tail = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
    jac = np.zeros((2, arm.n))
    jac[0, : link + 1] = -tail[1]
    jac[1, : link + 1] = tail[0]
    return jac


def jacobian(arm: PlanarArm, q) -> np.ndarray:
    th = np.cumsum(_angles(arm, q))
    return _point_jacobian(arm, th, arm.n - 1, arm.link_lengths_m[-1])


def inertia_matrix(arm: PlanarArm, q) -> np.ndarray:
    """Joint-space inertia: sum of m_i Jv_i^T Jv_i + I_i Jw_i^T Jw_i over links."""
    th = np.cumsum(_angles(arm, q))
    m = np.array(arm.link_masses_kg)
    inertia = arm.com_inertias
    out = np.zeros((arm.n, arm.n))
    for i, rc in enumerate(arm.com_offsets):
        jv = _point_jacobian(arm, th, i, rc)
        jw = np.zeros(arm.n)
        jw[: i + 1] = 1.0
        out += m[i] * jv.T @ jv + inertia[i] * np.outer(jw, jw)
    return out


def _unit(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (2,) or abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ContractError("impact direction must be a unit 2-vector")
    return u


def effective_mass(arm: PlanarArm, q, u=DOWN) -> float:
    """Mass felt at the end effector along ``u``; ``math.inf`` if J^T u vanishes."""
    u = _unit(u)
    jac = jacobian(arm, q)
    ju = jac.T @ u
    quad = float(ju @ np.linalg.solve(inertia_matrix(arm, q), ju))
    if quad < INFINITE_THRESHOLD:
        return math.inf
    return 1.0 / quad


def effective_mass_map(arm: PlanarArm, grid: GridSpec, u=DOWN, ee_orientation: float = -math.pi / 2,
                       elbow: str = "up") -> WorkspaceMap:
    """Effective mass at every reachable (d, h) cell; others are flagged ``unreachable``."""
    u = _unit(u)
    values = np.full((len(grid.heights_m), len(grid.distances_m)), np.nan)
    flags = []
    for i, h in enumerate(grid.heights_m):
        row = []
        for j, d in enumerate(grid.distances_m):
            try:
                q = ik_planar3(arm, (d, h), ee_orientation, elbow)
            except UnreachableError:
                row.append("unreachable")
                continue
            values[i, j] = effective_mass(arm, q, u)
            row.append("infinite" if math.isinf(values[i, j]) else "")
        flags.append(tuple(row))
    meta = (("inertia_model", arm.inertia_model), ("elbow", elbow),
            ("ee_orientation_rad", f"{ee_orientation:.9g}"), ("direction", f"{u[0]:.9g},{u[1]:.9g}"))
    return WorkspaceMap(grid.distances_m, grid.heights_m, values, tuple(flags), "effective-mass-map", "kg",
                        "planar-arm", None, meta)


def wrist_reach_fraction(arm: PlanarArm, d: float, h: float, ee_orientation: float = -math.pi / 2) -> float:
    """Wrist distance from the base relative to the reach of the first two links."""
    l1, l2, l3 = arm.link_lengths_m[:3]
    return math.hypot(d - l3 * math.cos(ee_orientation), h - l3 * math.sin(ee_orientation)) / (l1 + l2)


def interior_mask(arm: PlanarArm, wmap: WorkspaceMap, ee_orientation: float = -math.pi / 2,
                  max_fraction: float = INTERIOR_REACH_FRACTION) -> np.ndarray:
    """Boolean (heights x distances) mask of finite cells away from the reach boundary."""
    mask = np.isfinite(wmap.values)
    for i, h in enumerate(wmap.heights_m):
        for j, d in enumerate(wmap.distances_m):
            mask[i, j] &= wrist_reach_fraction(arm, d, h, ee_orientation) <= max_fraction
    return mask


def arm_to_json(arm: PlanarArm) -> str:
    return json.dumps({"link_lengths_m": list(arm.link_lengths_m), "link_masses_kg": list(arm.link_masses_kg),
                       "inertia_model": arm.inertia_model}, indent=2) + "\n"


def arm_from_json(text: str) -> PlanarArm:
    data = json.loads(text)
    return PlanarArm(tuple(data["link_lengths_m"]), tuple(data["link_masses_kg"]),
                     data.get("inertia_model", "uniform-rod"))


def load_arm(path) -> PlanarArm:
    with open(path, encoding="utf-8") as fh:
        return arm_from_json(fh.read())

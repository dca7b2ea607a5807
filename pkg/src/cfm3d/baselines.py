"""ISO/TS 15066 power-and-force-limiting (PFL) relation between speed and force.

Two-body spring model: ``v <= F_max / sqrt(k) * sqrt(1/m_R + 1/m_H)``.
A constrained (immovable) body part is modelled with ``m_H = INFINITE``,
which makes its inverse-mass term exactly zero.
"""

import math
from dataclasses import dataclass

from cfm3d.errors import ContractError

INFINITE = math.inf

F_QUASI_STATIC_N = 140.0
F_TRANSIENT_N = 280.0
K_HAND_NPM = 75000.0


@dataclass(frozen=True)
class PFLParams:
    f_max_n: float = F_QUASI_STATIC_N
    k_spring_npm: float = K_HAND_NPM
    m_robot_kg: float = 15.0
    m_human_kg: float = INFINITE

    def __post_init__(self):
        for name in ("f_max_n", "k_spring_npm", "m_robot_kg", "m_human_kg"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")
        if math.isinf(self.m_robot_kg):
            raise ContractError("robot mass must be finite")

    @property
    def inverse_mass_sum(self) -> float:
        inv_h = 0.0 if math.isinf(self.m_human_kg) else 1.0 / self.m_human_kg
        return 1.0 / self.m_robot_kg + inv_h


def pfl_max_velocity(p: PFLParams) -> float:
    """Maximum permissible relative speed (m/s) for the force limit ``p.f_max_n``."""
    return p.f_max_n / math.sqrt(p.k_spring_npm) * math.sqrt(p.inverse_mass_sum)


def pfl_force(v: float, p: PFLParams) -> float:
    """Peak force (N) predicted at speed ``v``; ``p.f_max_n`` is ignored."""
    if v < 0:
        raise ContractError("velocity must be >= 0")
    return v * math.sqrt(p.k_spring_npm) / math.sqrt(p.inverse_mass_sum)


def effective_mass_ts15066(moving_mass_kg: float, payload_kg: float = 0.0) -> float:
    """Half the moving mass plus the payload."""
    if moving_mass_kg < 0 or payload_kg < 0:
        raise ContractError("masses must be >= 0")
    return moving_mass_kg / 2.0 + payload_kg

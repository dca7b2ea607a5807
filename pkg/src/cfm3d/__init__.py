"""Collision-force maps for collaborative robots.

Fit log-linear impact-force models over end-effector distance, height and
velocity, invert them for safe speeds, and compare against the ISO/TS 15066
power-and-force-limiting formula and a planar effective-mass model.
"""

from cfm3d.errors import (
    CFMError,
    ContractError,
    DatasetError,
    DomainError,
    EliminationError,
    ExtrapolationWarning,
    InfeasibleError,
    InsufficientDataError,
    ParseError,
    UnderdeterminedError,
    UnreachableError,
)
from cfm3d.dataio import (
    GridSpec,
    MeasurementSample,
    MeasurementSet,
    filter_valid,
    parse_dataset,
    parse_datasets,
    serialize_dataset,
    split_train_test,
    synthesize_dataset,
)
from cfm3d.fitting import (
    CFMModel,
    FitDiagnostics,
    TermSpec,
    design_matrix,
    fit_cfm2d,
    fit_cfm3d,
    fit_ols,
    p_value_filter,
    stepwise_eliminate,
    term_pool,
)
from cfm3d.prediction import (
    SafetyQuery,
    WorkspaceMap,
    force_map,
    max_safe_velocity,
    predict_force,
    speed_map,
)

__version__ = "0.1.0"

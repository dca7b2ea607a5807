"""Synthetic studies shared by the experiment scripts and the acceptance suite."""

from __future__ import annotations

import warnings

from dataclasses import dataclass

from cfm3d.baselines import PFLParams
from cfm3d.dataio import DEVICE_LIMIT_N, GridSpec, filter_valid, split_train_test, synthesize_dataset
from cfm3d.errors import UnmatchedStateWarning
from cfm3d.evaluation import (
    Comparison,
    cfm2d_ensemble_predictor,
    cfm3d_predictor,
    compare_models,
    per_height_cfm2d,
    pfl_predictor,
)
from cfm3d.fitting import CFM3D_TERMS, TermSpec, fit_ols, select_terms
from cfm3d.presets import (
    MOVING_MASS_KG,
    NAMES,
    REPEAT_SD_N,
    TRAIN_GRIDS,
    TRAIN_VELOCITIES,
    drop_missing_positions,
    measurement_grid,
    published_model,
)

CUBES = (TermSpec(3, 0, 0), TermSpec(0, 3, 0), TermSpec(0, 0, 3))


@dataclass(frozen=True)
class RecoveryTrial:
    seed: int
    final_terms: tuple[TermSpec, ...]
    aliased: tuple[TermSpec, ...]
    n_samples: tuple[int, ...]

    @property
    def exact(self) -> bool:
        return set(self.final_terms) == set(CFM3D_TERMS)

    @property
    def cubes_pruned(self) -> bool:
        return not set(CUBES) & set(self.final_terms)


def recovery_trial(seed: int, noise_sd_n: float = 1.12, repetitions: int = 3, rmse_scale: str = "newton",
                   max_force_n: float | None = None) -> RecoveryTrial:
    """Synthesize the three training campaigns and run term selection on them.

    Each model gets its own seed stream (``seed * 3 + k``). Synthetic data
    has no sensor ceiling, so nothing is dropped unless ``max_force_n`` is
    given (e.g. ``DEVICE_LIMIT_N`` to mimic a saturating load cell).
    """
    sets = []
    for k, name in enumerate(NAMES):
        raw = synthesize_dataset(published_model(name), TRAIN_GRIDS[name], noise_sd_n, repetitions,
                                 seed=seed * 3 + k, label=name)
        sets.append(raw if max_force_n is None else filter_valid(raw, max_force_n))
    sel = select_terms(sets, rmse_scale=rmse_scale)
    return RecoveryTrial(seed, tuple(sel.final), tuple(sel.aliased), tuple(len(s) for s in sets))


def baseline_comparison(seed: int = 0, noise_sd_n: float | None = None, repetitions: int = 3,
                        name: str = "ur10e") -> Comparison:
    """3D CFM vs per-height 2D CFM vs PFL on the held-out states of a synthetic campaign.

    The 3D model is fitted on the sparse training grid; each 2D model sees
    every measured distance at its height (training velocities only), the
    most it could be given in a per-height campaign.
    """
    noise = REPEAT_SD_N.get(name, 1.12) if noise_sd_n is None else noise_sd_n
    grid = measurement_grid(name)
    full = synthesize_dataset(published_model(name), grid, noise, repetitions, seed=seed, label=name)
    if name == "ur10e":
        full = drop_missing_positions(full)
    full = filter_valid(full, DEVICE_LIMIT_N)
    per_height = GridSpec(grid.distances_m, grid.heights_m, TRAIN_VELOCITIES)
    with warnings.catch_warnings():
        # Skipped positions leave grid states without samples; that is expected here.
        warnings.simplefilter("ignore", UnmatchedStateWarning)
        train, test = split_train_test(full, TRAIN_GRIDS[name])
        train2d, _ = split_train_test(full, per_height)
    three_d = fit_ols(train, CFM3D_TERMS)
    pfl = PFLParams(m_robot_kg=MOVING_MASS_KG[name] / 2)
    return compare_models([("3D CFM", cfm3d_predictor(three_d)),
                           ("2D CFM", cfm2d_ensemble_predictor(per_height_cfm2d(train2d))),
                           ("PFL", pfl_predictor(pfl))], test)

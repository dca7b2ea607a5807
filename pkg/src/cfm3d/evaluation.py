"""Under/overestimation statistics, predictor comparison and contact classification."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from cfm3d.baselines import PFLParams, pfl_force
from cfm3d.dataio import DEFAULT_TOLERANCE, MeasurementSet, distinct_levels, slice_height
from cfm3d.errors import ContractError, DatasetError, InsufficientDataError
from cfm3d.fitting import CFMModel, fit_cfm2d

# Column order of the accuracy tables: max UE, mean UE, max OE, mean OE, each as % / N.
METRICS = ("max_ue_pct", "max_ue_n", "mean_ue_pct", "mean_ue_n",
           "max_oe_pct", "max_oe_n", "mean_oe_pct", "mean_oe_n")


@dataclass(frozen=True)
class ErrorReport:
    """Prediction error split into under- and overestimation.

    ``max_*_n`` is the newton error of the sample with the largest percentage
    error (the pair belongs together); ``peak_*_n`` is the largest newton
    error over the subset, which may come from a different sample. Means are
    over the respective subset only.
    """

    max_ue_pct: float
    max_ue_n: float
    mean_ue_pct: float
    mean_ue_n: float
    max_oe_pct: float
    max_oe_n: float
    mean_oe_pct: float
    mean_oe_n: float
    n_samples: int
    n_under: int
    n_over: int
    peak_ue_n: float = 0.0
    peak_oe_n: float = 0.0

    def metrics(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}


def _side(err_n, measured):
    if err_n.size == 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    pct = err_n / measured * 100.0
    k = int(np.argmax(pct))
    return float(pct[k]), float(err_n[k]), float(pct.mean()), float(err_n.mean()), float(err_n.max())


def errors_from_predictions(measured, predicted) -> ErrorReport:
    measured = np.asarray(measured, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if measured.size == 0:
        raise DatasetError("no samples to evaluate")
    if measured.shape != predicted.shape:
        raise ContractError("measured and predicted differ in shape")
    err = predicted - measured
    under, over = err < 0, err > 0
    ue = _side(-err[under], measured[under])
    oe = _side(err[over], measured[over])
    return ErrorReport(*ue[:4], *oe[:4], n_samples=int(measured.size), n_under=int(under.sum()),
                       n_over=int(over.sum()), peak_ue_n=ue[4], peak_oe_n=oe[4])


def estimation_errors(model: CFMModel | Callable, test: MeasurementSet) -> ErrorReport:
    """Compare a model (or any ``f(d, h, v) -> N`` callable) against measured forces."""
    d, h, v, f = test.columns()
    if len(f) == 0:
        raise DatasetError("test set is empty")
    if isinstance(model, CFMModel):
        pred = np.exp(model.linear_predictor(d, h, v))
    else:
        pred = np.array([model(a, b, c) for a, b, c in zip(d, h, v)], dtype=float)
    return errors_from_predictions(f, pred)


@dataclass(frozen=True)
class Comparison:
    reports: dict[str, ErrorReport]
    reference: str
    worse: dict[str, dict[str, bool]]  # predictor -> metric -> worse than reference


def compare_models(predictors: Sequence[tuple[str, Callable]], test: MeasurementSet,
                   reference: str | None = None) -> Comparison:
    """Evaluate each predictor and flag metrics where it is worse than ``reference``.

    Larger is worse for every metric. ``reference`` defaults to the first predictor.
    """
    if not predictors:
        raise ContractError("no predictors")
    names = [name for name, _ in predictors]
    if len(set(names)) != len(names):
        raise ContractError("predictor names must be unique")
    reference = reference or names[0]
    if reference not in names:
        raise ContractError(f"unknown reference {reference!r}")
    reports = {name: estimation_errors(fn, test) for name, fn in predictors}
    ref = reports[reference].metrics()
    worse = {name: {m: val > ref[m] for m, val in rep.metrics().items()} for name, rep in reports.items()}
    return Comparison(reports, reference, worse)


def per_height_cfm2d(train: MeasurementSet, tolerance: float = DEFAULT_TOLERANCE) -> dict[float, CFMModel]:
    """One 2D model per measured height."""
    _, h, _, _ = train.columns()
    return {lvl: fit_cfm2d(slice_height(train, lvl, tolerance), tolerance) for lvl in distinct_levels(h, tolerance)}


def cfm2d_ensemble_predictor(models: dict[float, CFMModel]) -> Callable:
    """Predict with the 2D model fitted at the nearest height."""
    heights = np.array(sorted(models))

    def predict(d, h, v):
        lvl = float(heights[np.argmin(np.abs(heights - h))])
        return float(np.exp(models[lvl].linear_predictor(d, h, v)))

    return predict


def cfm3d_predictor(model: CFMModel) -> Callable:
    def predict(d, h, v):
        return float(np.exp(model.linear_predictor(d, h, v)))
    return predict


def pfl_predictor(params: PFLParams) -> Callable:
    """Position-independent force from the PFL spring model."""
    def predict(d, h, v):
        return pfl_force(v, params)
    return predict


def report_table(reports: dict[str, ErrorReport], worse: dict[str, dict[str, bool]] | None = None) -> str:
    """Aligned text table; cells worse than the reference get a trailing ``*``."""
    head = ["predictor", "max UE [% / N]", "mean UE [% / N]", "max OE [% / N]", "mean OE [% / N]", "n (UE/OE)"]
    rows = []
    for name, rep in reports.items():
        cells = [name]
        for k in range(4):
            pct, n = METRICS[2 * k], METRICS[2 * k + 1]
            mark = "*" if worse and (worse[name][pct] or worse[name][n]) else ""
            cells.append(f"{getattr(rep, pct):.2f} / {getattr(rep, n):.2f}{mark}")
        cells.append(f"{rep.n_samples} ({rep.n_under}/{rep.n_over})")
        rows.append(cells)
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + rows]
    return "\n".join(lines) + "\n"


def report_csv(reports: dict[str, ErrorReport]) -> str:
    buf = io.StringIO()
    buf.write(",".join(("predictor",) + METRICS + ("n_samples", "n_under", "n_over")) + "\n")
    for name, rep in reports.items():
        vals = [f"{getattr(rep, m):.9g}" for m in METRICS] + [str(rep.n_samples), str(rep.n_under), str(rep.n_over)]
        buf.write(",".join([name] + vals) + "\n")
    return buf.getvalue()


# -- contact type -----------------------------------------------------------------

ONSET_THRESHOLD_N = 5.0
NOISE_FLOOR_N = 5.0
TRANSIENT_WINDOW_S = 0.5


@dataclass(frozen=True)
class ForceTrace:
    timestamps_s: np.ndarray
    forces_n: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps_s, dtype=float)
        f = np.asarray(self.forces_n, dtype=float)
        if t.shape != f.shape or t.ndim != 1 or t.size < 2:
            raise ContractError("timestamps and forces must be equal-length 1-D arrays of >= 2 samples")
        if np.any(np.diff(t) <= 0):
            raise ContractError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps_s", t)
        object.__setattr__(self, "forces_n", f)


@dataclass(frozen=True)
class ContactVerdict:
    contact: str             # "transient" or "quasi-static"
    compliant: bool
    onset_s: float
    peak_n: float            # max force within the transient window
    sustained_n: float       # max force after the window, relative to baseline


def classify_contact(trace: ForceTrace, transient_window_s: float = TRANSIENT_WINDOW_S,
                     quasi_static_limit_n: float = 140.0, transient_limit_n: float = 280.0,
                     onset_threshold_n: float = ONSET_THRESHOLD_N,
                     noise_floor_n: float = NOISE_FLOOR_N) -> ContactVerdict:
    """Transient if the force has died out once the window after onset has passed.

    Onset is the first sample more than ``onset_threshold_n`` above the initial
    reading. The window is ``[onset, onset + transient_window_s)``; the peak
    inside it must respect ``transient_limit_n`` and, for quasi-static
    contact, everything after it must respect ``quasi_static_limit_n``.
    """
    t, f = trace.timestamps_s, trace.forces_n
    baseline = f[0]
    above = np.nonzero(f - baseline > onset_threshold_n)[0]
    if above.size == 0:
        raise InsufficientDataError("no impact found in trace")
    onset = t[above[0]]
    end = onset + transient_window_s
    if t[-1] < end:
        raise InsufficientDataError(f"trace ends at {t[-1]:g} s, before the window closes at {end:g} s")
    inside = (t >= onset) & (t < end)
    after = t >= end
    peak = float(f[inside].max())
    sustained = float((f[after] - baseline).max())
    transient = sustained <= noise_floor_n
    compliant = peak <= transient_limit_n and (transient or sustained + baseline <= quasi_static_limit_n)
    return ContactVerdict("transient" if transient else "quasi-static", bool(compliant), float(onset), peak,
                          sustained)

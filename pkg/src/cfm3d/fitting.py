"""Log-linear force models over (d, h, v) and the two-stage term selection.

A model predicts ``ln F = sum_j beta_j * d**a_j * h**b_j * v**c_j``. Term
selection runs in two stages over several datasets at once:

1. fit the full cubic pool to every dataset and drop each term whose p-value
   exceeds ``alpha`` in *all* datasets (columns aliased by the grid count as
   insignificant);
2. repeatedly drop the term whose removal changes the fits least, scored as
   ``sum over datasets of |dRMSE| + 100 |dR^2|``, until the cheapest removal
   costs more than ``stop_threshold``.

R^2 is that of the ln F regression. RMSE in the score defaults to newtons
(back-transformed predictions vs measured force); with the log-space RMSE the
score is dominated by the R^2 term and a 0.5 threshold strips genuine
low-order terms such as d^2 and d*h.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from cfm3d.dataio import DEFAULT_TOLERANCE, MeasurementSet
from cfm3d.errors import ContractError, DomainError, EliminationError, UnderdeterminedError
from cfm3d.linalg import qr_limited_pivoting
from cfm3d.stats import student_t_two_sided_p

log = logging.getLogger(__name__)

VARIABLES = ("d", "h", "v")
EXACT_FIT_RATIO = 1e-12
EXACT_FIT_COEF = 1e-9


@dataclass(frozen=True)
class TermSpec:
    exp_d: int = 0
    exp_h: int = 0
    exp_v: int = 0

    def __post_init__(self):
        if min(self.exp_d, self.exp_h, self.exp_v) < 0:
            raise ContractError(f"negative exponent in {self.exponents}")

    @property
    def exponents(self) -> tuple[int, int, int]:
        return (self.exp_d, self.exp_h, self.exp_v)

    @property
    def degree(self) -> int:
        return self.exp_d + self.exp_h + self.exp_v

    @property
    def is_intercept(self) -> bool:
        return self.degree == 0

    def sort_key(self):
        """Graded lexicographic: total degree first, then d before h before v."""
        return (self.degree, -self.exp_d, -self.exp_h, -self.exp_v)

    def evaluate(self, d, h, v):
        d, h, v = (np.asarray(x, dtype=float) for x in (d, h, v))
        return d**self.exp_d * h**self.exp_h * v**self.exp_v

    def __str__(self):
        if self.is_intercept:
            return "1"
        parts = []
        for name, e in zip(VARIABLES, self.exponents):
            if e == 1:
                parts.append(name)
            elif e > 1:
                parts.append(f"{name}^{e}")
        return "*".join(parts)

    @classmethod
    def parse(cls, text: str) -> TermSpec:
        """Inverse of ``str``: ``"1"``, ``"d"``, ``"d^2*v"`` ..."""
        text = text.strip()
        if text == "1":
            return cls()
        exps = dict.fromkeys(VARIABLES, 0)
        for factor in text.split("*"):
            name, _, power = factor.strip().partition("^")
            if name not in exps:
                raise ContractError(f"unknown variable {name!r} in term {text!r}")
            exps[name] += int(power) if power else 1
        return cls(exps["d"], exps["h"], exps["v"])


INTERCEPT = TermSpec()


def sort_terms(terms) -> list[TermSpec]:
    return sorted(set(terms), key=TermSpec.sort_key)


def terms_from_strings(names) -> list[TermSpec]:
    return sort_terms(TermSpec.parse(n) for n in names)


# The published 3D CFM form: 1, v, d, d^2, d*h, h^2, d^2*v, d*v^2, d*h^2
CFM3D_TERMS = terms_from_strings(["1", "v", "d", "d^2", "d*h", "h^2", "d^2*v", "d*v^2", "d*h^2"])
# The 2D CFM form: 1, v, d, d^2
CFM2D_TERMS = terms_from_strings(["1", "v", "d", "d^2"])


@dataclass(frozen=True)
class FitDiagnostics:
    rmse: float
    r2: float
    std_errors: tuple[float, ...]
    p_values: tuple[float, ...]
    dof: int
    n_samples: int
    rmse_n: float = float("nan")  # RMSE of exp(prediction) against measured force, N


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box (lo, hi) per variable, from the training data."""

    distance_m: tuple[float, float]
    height_m: tuple[float, float]
    velocity_mps: tuple[float, float]

    @classmethod
    def from_data(cls, d, h, v) -> Domain:
        return cls((float(np.min(d)), float(np.max(d))), (float(np.min(h)), float(np.max(h))),
                   (float(np.min(v)), float(np.max(v))))

    def contains(self, d, h, v, tol: float = DEFAULT_TOLERANCE):
        ok = np.ones(np.broadcast(np.asarray(d), np.asarray(h), np.asarray(v)).shape, dtype=bool)
        for x, (lo, hi) in ((d, self.distance_m), (h, self.height_m), (v, self.velocity_mps)):
            x = np.asarray(x, dtype=float)
            ok &= (x >= lo - tol) & (x <= hi + tol)
        return ok


@dataclass(frozen=True)
class CFMModel:
    """A fitted (or published) log-linear force model.

    ``terms`` are the active terms in graded-lex order; ``aliased`` lists
    requested terms that the data could not identify (no coefficient).
    """

    terms: tuple[TermSpec, ...]
    coefficients: tuple[float, ...]
    domain: Domain
    label: str = ""
    diagnostics: FitDiagnostics | None = None
    aliased: tuple[TermSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "aliased", tuple(self.aliased))
        if len(self.terms) != len(self.coefficients):
            raise ContractError("terms and coefficients differ in length")

    @property
    def requested_terms(self) -> tuple[TermSpec, ...]:
        return tuple(sort_terms(self.terms + self.aliased))

    def coefficient(self, term: TermSpec) -> float:
        """Coefficient of ``term``; 0 for terms absent from the model."""
        try:
            return self.coefficients[self.terms.index(term)]
        except ValueError:
            return 0.0

    def linear_predictor(self, d, h, v):
        """ln F at the given point(s); broadcasts over array inputs."""
        out = 0.0
        for term, beta in zip(self.terms, self.coefficients):
            out = out + beta * term.evaluate(d, h, v)
        return out * np.ones(np.broadcast(np.asarray(d), np.asarray(h), np.asarray(v)).shape)

    def in_domain(self, d, h, v):
        return self.domain.contains(d, h, v)

    def velocity_polynomial(self, d, h):
        """Coefficients (A, B, C) with ln F = A + B v + C v^2 at position (d, h)."""
        if any(t.exp_v > 2 for t in self.terms):
            raise ContractError("model has terms of velocity degree > 2; cannot invert in closed form")
        acc = [0.0, 0.0, 0.0]
        for term, beta in zip(self.terms, self.coefficients):
            pos = TermSpec(term.exp_d, term.exp_h, 0).evaluate(d, h, 1.0)
            acc[term.exp_v] = acc[term.exp_v] + beta * pos
        return tuple(acc)


def term_pool(max_degree: int = 3) -> list[TermSpec]:
    """Intercept plus every monomial in (d, h, v) of total degree 1..max_degree."""
    if max_degree < 1:
        raise ContractError("max_degree must be >= 1")
    terms = [TermSpec(a, b, c) for a, b, c in itertools.product(range(max_degree + 1), repeat=3)
             if a + b + c <= max_degree]
    return sort_terms(terms)


def design_matrix(samples: MeasurementSet, terms: Sequence[TermSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Regressor matrix (one column per term) and the ln-force response."""
    if not terms:
        raise ContractError("terms must be non-empty")
    d, h, v, f = samples.columns()
    if np.any(f <= 0):
        raise DomainError("force must be > 0 to take its logarithm")
    x = np.column_stack([t.evaluate(d, h, v) for t in terms]) if len(d) else np.zeros((0, len(terms)))
    return x, np.log(f)


def _fit_arrays(x, y, terms, domain, label, tol=1e-7) -> CFMModel:
    n, p = x.shape
    qr = qr_limited_pivoting(x, tol=tol)
    k = qr.rank
    if k == n and n < p:
        raise UnderdeterminedError(f"{n} samples cannot identify {p} terms")
    if k == 0:
        raise UnderdeterminedError("no identifiable column")
    coef, rss = qr.solve(y)
    rss = max(rss, 0.0)
    tss = float(np.sum((y - y.mean()) ** 2))
    dof = n - k
    rmse = math.sqrt(rss / n)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0

    exact = dof == 0 or rss / dof <= EXACT_FIT_RATIO * tss
    if exact:
        se = np.zeros(k)
        p_vals = np.where(np.abs(coef) > EXACT_FIT_COEF, 0.0, 1.0)
    else:
        se = np.sqrt(qr.unscaled_covariance_diag() * rss / dof)
        with np.errstate(divide="ignore"):
            t = np.where(se > 0, coef / np.where(se > 0, se, 1.0), np.inf)
        p_vals = student_t_two_sided_p(t, dof)

    kept_terms = tuple(terms[j] for j in qr.kept)
    rmse_n = math.sqrt(float(np.mean((np.exp(x[:, qr.kept] @ coef) - np.exp(y)) ** 2)))
    diag = FitDiagnostics(rmse, r2, tuple(se.tolist()), tuple(p_vals.tolist()), dof, n, rmse_n)
    return CFMModel(kept_terms, tuple(coef.tolist()), domain, label, diag,
                    tuple(terms[j] for j in qr.aliased))


def fit_ols(samples: MeasurementSet, terms: Sequence[TermSpec]) -> CFMModel:
    """Ordinary least squares of ln F on the given terms.

    Columns that are linear combinations of earlier (lower-order) columns on
    this data are dropped and listed in ``CFMModel.aliased``.
    """
    terms = sort_terms(terms)
    x, y = design_matrix(samples, terms)
    if len(y) == 0:
        raise UnderdeterminedError("no samples")
    d, h, v, _ = samples.columns()
    return _fit_arrays(x, y, terms, Domain.from_data(d, h, v), samples.label)


def p_value_filter(fits: Sequence[CFMModel], alpha: float = 0.05) -> list[TermSpec]:
    """Terms that are significant (p <= alpha) in at least one fit.

    A term aliased in a fit counts as insignificant there. The intercept is
    always kept.
    """
    if not fits:
        raise ContractError("no fits given")
    if not 0 < alpha < 1:
        raise ContractError("alpha must lie in (0, 1)")
    requested = fits[0].requested_terms
    if any(f.requested_terms != requested for f in fits[1:]):
        raise ContractError("fits were made over different term lists")

    keep = []
    for term in requested:
        if term.is_intercept:
            keep.append(term)
            continue
        for fit in fits:
            if term in fit.terms and fit.diagnostics.p_values[fit.terms.index(term)] <= alpha:
                keep.append(term)
                break
    return keep


@dataclass
class EliminationStep:
    removed: TermSpec
    score: float
    n_terms_after: int


@dataclass
class Selection:
    pool: list[TermSpec]
    aliased: list[TermSpec]
    stage_one: list[TermSpec]
    final: list[TermSpec]
    steps: list[EliminationStep] = field(default_factory=list)
    stop_score: float | None = None


class _Prepared:
    """Full-pool design matrices per dataset; column subsets are refit cheaply."""

    def __init__(self, datasets, terms):
        self.terms = list(terms)
        self.index = {t: i for i, t in enumerate(self.terms)}
        self.data = []
        for ds in datasets:
            x, y = design_matrix(ds, self.terms)
            d, h, v, _ = ds.columns()
            self.data.append((x, y, Domain.from_data(d, h, v), ds.label))

    def fit(self, i, terms):
        x, y, dom, label = self.data[i]
        terms = sort_terms(terms)
        cols = [self.index[t] for t in terms]
        return _fit_arrays(x[:, cols], y, terms, dom, label)

    def fit_all(self, terms):
        return [self.fit(i, terms) for i in range(len(self.data))]


RMSE_SCALES = ("newton", "log")


def change_score(base: Sequence[CFMModel], trial: Sequence[CFMModel], rmse_scale: str = "newton") -> float:
    """sum over datasets of |dRMSE| + 100 |dR^2| between two lists of fits."""
    attr = {"newton": "rmse_n", "log": "rmse"}[rmse_scale]
    return sum(abs(getattr(t.diagnostics, attr) - getattr(b.diagnostics, attr))
               + 100.0 * abs(t.diagnostics.r2 - b.diagnostics.r2)
               for b, t in zip(base, trial))


def _eliminate(prep: _Prepared, terms, stop_threshold, steps,
               rmse_scale="newton") -> tuple[list[TermSpec], float | None]:
    if rmse_scale not in RMSE_SCALES:
        raise ContractError(f"rmse_scale must be one of {RMSE_SCALES}")
    current = sort_terms(terms)
    if INTERCEPT not in current:
        raise ContractError("term list must contain the intercept")
    while True:
        candidates = [t for t in current if not t.is_intercept]
        if not candidates:
            return current, None
        base = prep.fit_all(current)
        scored = []
        for term in candidates:
            reduced = [t for t in current if t != term]
            try:
                trial = prep.fit_all(reduced)
            except Exception as exc:
                raise EliminationError(term, exc) from exc
            scored.append((change_score(base, trial, rmse_scale), -term.degree, [-k for k in term.sort_key()], term))
        # Ties: prefer dropping the higher-degree (then later graded-lex) term.
        score, _, _, worst = min(scored, key=lambda s: s[:3])
        if score > stop_threshold:
            return current, score
        current = [t for t in current if t != worst]
        steps.append(EliminationStep(worst, score, len(current)))
        log.debug("removed %s (score %.6g), %d terms left", worst, score, len(current))


def stepwise_eliminate(datasets: Sequence[MeasurementSet], terms: Sequence[TermSpec],
                       stop_threshold: float = 0.5, rmse_scale: str = "newton") -> list[TermSpec]:
    """Backward elimination shared across datasets; returns the surviving terms.

    Each round scores every non-intercept term by refitting all datasets
    without it and comparing against the current model; the cheapest term is
    dropped unless its score exceeds ``stop_threshold``.
    """
    if not datasets:
        raise ContractError("no datasets given")
    prep = _Prepared(datasets, sort_terms(terms))
    final, _ = _eliminate(prep, terms, stop_threshold, [], rmse_scale)
    return final


def select_terms(datasets: Sequence[MeasurementSet], pool_degree: int = 3, alpha: float = 0.05,
                 stop_threshold: float = 0.5, rmse_scale: str = "newton") -> Selection:
    """Run both selection stages and keep a record of what happened."""
    if not datasets:
        raise ContractError("no datasets given")
    pool = term_pool(pool_degree)
    prep = _Prepared(datasets, pool)
    full_fits = prep.fit_all(pool)
    aliased = [t for t in pool if all(t in f.aliased for f in full_fits)]
    stage_one = p_value_filter(full_fits, alpha)
    steps: list[EliminationStep] = []
    final, stop_score = _eliminate(prep, stage_one, stop_threshold, steps, rmse_scale)
    return Selection(pool, aliased, stage_one, final, steps, stop_score)


def fit_cfm3d(datasets: Sequence[MeasurementSet], pool_degree: int = 3, alpha: float = 0.05,
              stop_threshold: float = 0.5, rmse_scale: str = "newton") -> list[CFMModel]:
    """Select one shared term list over all datasets, then fit each dataset on it."""
    sel = select_terms(datasets, pool_degree, alpha, stop_threshold, rmse_scale)
    return [fit_ols(ds, sel.final) for ds in datasets]


def fit_cfm2d(dataset: MeasurementSet, tolerance: float = DEFAULT_TOLERANCE) -> CFMModel:
    """Fit ln F = b0 + b1 v + b2 d + b3 d^2 to a single-height slice."""
    _, h, _, _ = dataset.columns()
    if len(h) < len(CFM2D_TERMS):
        raise ContractError(f"need at least {len(CFM2D_TERMS)} samples, got {len(h)}")
    if np.ptp(h) > tolerance:
        raise ContractError(f"samples span heights {h.min():g}..{h.max():g}; slice to one height first")
    return fit_ols(dataset, CFM2D_TERMS)


# -- serialization -------------------------------------------------------------

FORMAT = "cfm-model/1"


def model_to_dict(model: CFMModel) -> dict:
    out = {
        "format": FORMAT,
        "label": model.label,
        "terms": [list(t.exponents) for t in model.terms],
        "term_names": [str(t) for t in model.terms],
        "coefficients": list(model.coefficients),
        "aliased": [list(t.exponents) for t in model.aliased],
        "domain": {
            "distance_m": list(model.domain.distance_m),
            "height_m": list(model.domain.height_m),
            "velocity_mps": list(model.domain.velocity_mps),
        },
        "diagnostics": None,
    }
    if model.diagnostics is not None:
        dg = model.diagnostics
        out["diagnostics"] = {
            "rmse": dg.rmse, "r2": dg.r2, "std_errors": list(dg.std_errors),
            "p_values": list(dg.p_values), "dof": dg.dof, "n_samples": dg.n_samples, "rmse_n": dg.rmse_n,
        }
    return out


def model_from_dict(data: dict) -> CFMModel:
    if data.get("format") != FORMAT:
        raise ContractError(f"unsupported model format {data.get('format')!r}")
    dom = data["domain"]
    diag = data.get("diagnostics")
    return CFMModel(
        terms=tuple(TermSpec(*e) for e in data["terms"]),
        coefficients=tuple(data["coefficients"]),
        domain=Domain(tuple(dom["distance_m"]), tuple(dom["height_m"]), tuple(dom["velocity_mps"])),
        label=data.get("label", ""),
        diagnostics=None if diag is None else FitDiagnostics(
            diag["rmse"], diag["r2"], tuple(diag["std_errors"]), tuple(diag["p_values"]),
            int(diag["dof"]), int(diag["n_samples"]), diag.get("rmse_n", float("nan"))),
        aliased=tuple(TermSpec(*e) for e in data.get("aliased", [])),
    )


def dumps_model(model: CFMModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def loads_model(text: str) -> CFMModel:
    return model_from_dict(json.loads(text))


def save_model(model: CFMModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> CFMModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())

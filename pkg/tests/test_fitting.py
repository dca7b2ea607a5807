import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfm3d.dataio import GridSpec, MeasurementSample, MeasurementSet, synthesize_dataset
from cfm3d.errors import ContractError, DomainError, EliminationError, UnderdeterminedError
from cfm3d.fitting import (
    CFM2D_TERMS,
    CFM3D_TERMS,
    INTERCEPT,
    CFMModel,
    Domain,
    TermSpec,
    change_score,
    design_matrix,
    dumps_model,
    fit_cfm2d,
    fit_cfm3d,
    fit_ols,
    loads_model,
    p_value_filter,
    select_terms,
    stepwise_eliminate,
    term_pool,
    terms_from_strings,
)
from cfm3d.presets import KUKA_GRID, NAMES, TRAIN_GRIDS, UR10E_GRID, UR10E_TRAIN_GRID, published_model

GRID3 = GridSpec((0.5, 0.7, 0.9), (0.1, 0.3, 0.5), (0.2, 0.3, 0.4))
T = TermSpec.parse


def _model(terms, coefs, label="m"):
    return CFMModel(tuple(terms), tuple(coefs), Domain((0.5, 0.9), (0.1, 0.5), (0.2, 0.4)), label)


# -- terms ---------------------------------------------------------------------

def test_pool_degree3_has_19_terms_plus_intercept():
    pool = term_pool(3)
    assert len(pool) == 20 and pool[0] == INTERCEPT
    assert sum(not t.is_intercept for t in pool) == 19


def test_pool_degree1():
    assert [str(t) for t in term_pool(1)] == ["1", "d", "h", "v"]


def test_pool_degree2_matches_enumeration():
    brute = {(a, b, c) for a in range(3) for b in range(3) for c in range(3) if a + b + c <= 2}
    pool = term_pool(2)
    assert {t.exponents for t in pool} == brute and len(pool) == 10
    assert [str(t) for t in pool] == ["1", "d", "h", "v", "d^2", "d*h", "d*v", "h^2", "h*v", "v^2"]


def test_pool_rejects_degree0():
    with pytest.raises(ContractError):
        term_pool(0)


@given(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4))
def test_term_str_roundtrip(a, b, c):
    t = TermSpec(a, b, c)
    assert TermSpec.parse(str(t)) == t


def test_cfm3d_terms():
    assert [str(t) for t in CFM3D_TERMS] == ["1", "d", "v", "d^2", "d*h", "h^2", "d^2*v", "d*h^2", "d*v^2"]


# -- design matrix -------------------------------------------------------------

def test_design_matrix_values():
    mset = MeasurementSet((MeasurementSample(1, 1, 1, 150.0), MeasurementSample(0.8, 0.4, 0.3, 150.0)), "x")
    x, y = design_matrix(mset, [T("d*h^2"), T("d^2*v")])
    assert x[0].tolist() == [1.0, 1.0]
    assert x[1, 0] == pytest.approx(0.128, abs=1e-15)
    assert y[0] == pytest.approx(5.0106352941, abs=1e-9)


def test_design_matrix_rejects_nonpositive_force():
    mset = MeasurementSet((MeasurementSample(1, 1, 1, 1.0),), "x")
    object.__setattr__(mset.samples[0], "force_n", 0.0)
    with pytest.raises(DomainError):
        design_matrix(mset, [INTERCEPT])


# -- OLS -----------------------------------------------------------------------

@pytest.mark.parametrize("name", NAMES)
def test_round_trip_recovers_published_coefficients(name):
    m = published_model(name)
    grid = UR10E_GRID if name == "ur10e" else KUKA_GRID
    fit = fit_ols(synthesize_dataset(m, grid), CFM3D_TERMS)
    np.testing.assert_allclose(fit.coefficients, m.coefficients, rtol=1e-6)
    assert fit.diagnostics.rmse < 1e-10 and fit.diagnostics.r2 == pytest.approx(1.0)
    assert all(p == 0.0 for p in fit.diagnostics.p_values)


def test_constant_response_intercept_only():
    mset = MeasurementSet(tuple(MeasurementSample(0.5 + 0.1 * i, 0.2, 0.3, 42.0) for i in range(5)), "c")
    fit = fit_ols(mset, [INTERCEPT])
    assert fit.coefficients[0] == pytest.approx(math.log(42.0))
    assert fit.diagnostics.rmse == pytest.approx(0.0, abs=1e-15)
    assert fit.diagnostics.r2 == 1.0


def test_cube_terms_aliased_on_three_level_grid():
    mset = synthesize_dataset(published_model("ur10e"), GRID3, 1.0, 2, seed=1)
    fit = fit_ols(mset, term_pool(3))
    assert sorted(map(str, fit.aliased)) == ["d^3", "h^3", "v^3"]
    # Oracle: SVD rank. Each pure cube lies in span{1, x, x^2}; everything else is independent.
    x, _ = design_matrix(mset, term_pool(3))
    names = [str(t) for t in term_pool(3)]
    assert np.linalg.matrix_rank(x) == 17
    for var in "dhv":
        cols = [names.index(n) for n in ("1", var, f"{var}^2")]
        with_cube = cols + [names.index(f"{var}^3")]
        assert np.linalg.matrix_rank(x[:, with_cube]) == 3
    keep = [i for i, n in enumerate(names) if n not in ("d^3", "h^3", "v^3")]
    assert np.linalg.matrix_rank(x[:, keep]) == 17


@pytest.mark.parametrize("levels", [2, 3, 4])
def test_pure_powers_above_levels_are_aliased(levels):
    d = tuple(np.linspace(0.5, 0.9, levels))
    h = tuple(np.linspace(0.1, 0.5, levels))
    v = tuple(np.linspace(0.2, 0.4, levels))
    mset = synthesize_dataset(published_model("ur10e"), GridSpec(d, h, v), 1.0, 2, seed=0)
    fit = fit_ols(mset, term_pool(3))
    for term in term_pool(3):
        if max(term.exponents) == term.degree and term.degree > levels - 1:
            assert term in fit.aliased


def test_underdetermined():
    mset = MeasurementSet(tuple(MeasurementSample(0.5 + 0.1 * i, 0.2 + 0.1 * i, 0.3, 40.0 + i) for i in range(3)), "u")
    with pytest.raises(UnderdeterminedError):
        fit_ols(mset, term_pool(2))


def test_ols_against_lstsq_and_brute_force(rng):
    mset = synthesize_dataset(published_model("kuka30"), KUKA_GRID, 3.0, 1, seed=11)
    fit = fit_ols(mset, CFM3D_TERMS)
    x, y = design_matrix(mset, CFM3D_TERMS)
    ref = np.linalg.lstsq(x, y, rcond=None)[0]
    np.testing.assert_allclose(fit.coefficients, ref, rtol=1e-8)
    resid = y - x @ np.array(fit.coefficients)
    # Residual orthogonality, normal equations.
    assert np.max(np.abs(x.T @ resid)) <= 1e-8 * np.linalg.norm(y)
    rss = sum(r * r for r in resid)
    tss = sum((yi - sum(y) / len(y)) ** 2 for yi in y)
    assert fit.diagnostics.r2 == pytest.approx(1 - rss / tss, rel=1e-12)
    assert fit.diagnostics.rmse == pytest.approx(math.sqrt(rss / len(y)), rel=1e-12)
    dof = len(y) - x.shape[1]
    se = np.sqrt(np.diag(np.linalg.inv(x.T @ x)) * rss / dof)
    np.testing.assert_allclose(fit.diagnostics.std_errors, se, rtol=1e-8)
    assert fit.diagnostics.dof == dof
    f = np.exp(y)
    assert fit.diagnostics.rmse_n == pytest.approx(np.sqrt(np.mean((np.exp(x @ ref) - f) ** 2)), rel=1e-8)


def test_p_values_monotone_in_abs_t():
    mset = synthesize_dataset(published_model("ur10e"), UR10E_TRAIN_GRID, 5.0, 3, seed=2)
    dg = fit_ols(mset, term_pool(2)).diagnostics
    fit = fit_ols(mset, term_pool(2))
    t = np.abs(np.array(fit.coefficients) / np.array(dg.std_errors))
    order = np.argsort(t)
    p = np.array(dg.p_values)[order]
    assert np.all(np.diff(p) <= 1e-15)
    assert all(0 <= x <= 1 for x in dg.p_values)


# -- stage one -----------------------------------------------------------------

def _fake_fit(pvals, terms):
    return CFMModel(tuple(terms), (1.0,) * len(terms), Domain((0, 1), (0, 1), (0, 1)), "f",
                    diagnostics=__import__("cfm3d.fitting", fromlist=["FitDiagnostics"]).FitDiagnostics(
                        0.1, 0.9, (0.1,) * len(terms), tuple(pvals), 10, 20))


def test_p_filter_removes_when_insignificant_everywhere():
    terms = [INTERCEPT, T("d")]
    fits = [_fake_fit([0.0, p], terms) for p in (0.20, 0.30, 0.99)]
    assert p_value_filter(fits, 0.05) == [INTERCEPT]


def test_p_filter_keeps_when_significant_once():
    terms = [INTERCEPT, T("d")]
    fits = [_fake_fit([0.9, p], terms) for p in (0.20, 0.01, 0.99)]
    assert p_value_filter(fits, 0.05) == terms


def test_p_filter_requires_same_terms():
    with pytest.raises(ContractError):
        p_value_filter([_fake_fit([0, 0], [INTERCEPT, T("d")]), _fake_fit([0, 0], [INTERCEPT, T("h")])])


def test_p_filter_drops_aliased_everywhere():
    sets = [synthesize_dataset(published_model(n), TRAIN_GRIDS[n], 1.12, 3, seed=i) for i, n in enumerate(NAMES)]
    fits = [fit_ols(s, term_pool(3)) for s in sets]
    kept = p_value_filter(fits, 0.05)
    assert not {T("d^3"), T("h^3"), T("v^3")} & set(kept)
    # The generating terms survive stage one.
    assert set(CFM3D_TERMS) <= set(kept)


# -- stage two -----------------------------------------------------------------

def test_zero_coefficient_term_scores_zero_and_goes_first():
    gen = _model(terms_from_strings(["1", "d", "v", "h^2"]), [5.0, -1.0, 3.0, -2.0])
    mset = synthesize_dataset(gen, GRID3)
    terms = terms_from_strings(["1", "d", "v", "h^2", "d*h"])
    base = [fit_ols(mset, terms)]
    trial = [fit_ols(mset, [t for t in terms if str(t) != "d*h"])]
    assert change_score(base, trial) == pytest.approx(0.0, abs=1e-9)
    final = stepwise_eliminate([mset], terms, stop_threshold=1e-6)
    assert final == terms_from_strings(["1", "d", "v", "h^2"])


def test_single_informative_term_is_kept():
    gen = _model(terms_from_strings(["1", "v"]), [4.0, 3.0])
    mset = synthesize_dataset(gen, GRID3, 1.0, 2, seed=4)
    assert stepwise_eliminate([mset], terms_from_strings(["1", "v"]), 0.5) == terms_from_strings(["1", "v"])


def test_elimination_never_drops_intercept_and_shrinks():
    sets = [synthesize_dataset(published_model(n), TRAIN_GRIDS[n], 1.12, 3, seed=9 + i) for i, n in enumerate(NAMES)]
    sel = select_terms(sets, stop_threshold=1e9)
    assert sel.final == [INTERCEPT]
    sizes = [len(sel.stage_one)] + [s.n_terms_after for s in sel.steps]
    assert all(b == a - 1 for a, b in zip(sizes, sizes[1:]))
    assert INTERCEPT not in [s.removed for s in sel.steps]


def test_elimination_requires_intercept():
    mset = synthesize_dataset(published_model("ur10e"), GRID3)
    with pytest.raises(ContractError):
        stepwise_eliminate([mset], [T("d"), T("v")])


def test_elimination_reports_failing_term():
    # 4 samples: dropping any term still fits, but a 5th term aliasing the grid can't make it underdetermined;
    # instead feed a dataset too small for the reduced model once a refit runs out of rows.
    tiny = MeasurementSet(tuple(MeasurementSample(0.5 + 0.1 * i, 0.2, 0.3, 40.0 + i) for i in range(2)), "t")
    with pytest.raises((EliminationError, UnderdeterminedError)):
        stepwise_eliminate([tiny], terms_from_strings(["1", "d", "d^2"]))


def test_fit_cfm3d_recovers_published_form():
    sets = [synthesize_dataset(published_model(n), TRAIN_GRIDS[n], 1.12, 3, seed=100 + i) for i, n in enumerate(NAMES)]
    models = fit_cfm3d(sets)
    assert len(models) == 3
    for m in models:
        assert list(m.terms) == CFM3D_TERMS


def test_fit_cfm3d_degree1_single_dataset():
    mset = synthesize_dataset(published_model("ur10e"), UR10E_TRAIN_GRID, 1.12, 3, seed=5)
    (model,) = fit_cfm3d([mset], pool_degree=1)
    assert set(model.terms) <= set(term_pool(1)) and INTERCEPT in model.terms


def test_fit_cfm3d_empty():
    with pytest.raises(ContractError):
        fit_cfm3d([])


def test_log_scale_score_is_available():
    sets = [synthesize_dataset(published_model(n), TRAIN_GRIDS[n], 0.0, 1, seed=0) for n in NAMES]
    sel = select_terms(sets, rmse_scale="log")
    assert set(sel.final) < set(CFM3D_TERMS)
    with pytest.raises(ContractError):
        select_terms(sets, rmse_scale="kg")


# -- 2D CFM ----------------------------------------------------------------------

def test_cfm2d_exact_recovery():
    gen = _model(CFM2D_TERMS, [6.0, -2.0, 3.5, 0.8])
    mset = synthesize_dataset(gen, GridSpec((0.5, 0.6, 0.7, 0.8), (0.3,), (0.2, 0.3, 0.4)))
    fit = fit_cfm2d(mset)
    np.testing.assert_allclose(fit.coefficients, gen.coefficients, rtol=1e-9)


def test_cfm2d_rejects_mixed_heights():
    mset = synthesize_dataset(published_model("ur10e"), GridSpec((0.5, 0.7), (0.14, 0.22), (0.2, 0.4)))
    with pytest.raises(ContractError):
        fit_cfm2d(mset)


def test_cfm2d_rejects_too_few_samples():
    mset = synthesize_dataset(published_model("ur10e"), GridSpec((0.5,), (0.14,), (0.2, 0.4)))
    with pytest.raises(ContractError):
        fit_cfm2d(mset)


# -- serialization -----------------------------------------------------------------

def test_model_serialization_roundtrip():
    mset = synthesize_dataset(published_model("kuka10"), GRID3, 2.0, 2, seed=1)
    fit = fit_ols(mset, term_pool(3))
    text = dumps_model(fit)
    again = loads_model(text)
    assert again == fit
    assert dumps_model(again) == text


def test_published_model_serialization_roundtrip(published):
    assert loads_model(dumps_model(published)) == published


@given(st.lists(st.floats(-10, 10), min_size=9, max_size=9))
def test_random_nine_term_round_trip(coefs):
    coefs = [8.0 if i == 0 else c for i, c in enumerate(coefs)]  # keep forces in a sane range
    gen = _model(CFM3D_TERMS, [c / 4 if i else c for i, c in enumerate(coefs)])
    fit = fit_ols(synthesize_dataset(gen, UR10E_GRID), CFM3D_TERMS)
    np.testing.assert_allclose(fit.coefficients, gen.coefficients, rtol=1e-6, atol=1e-9)

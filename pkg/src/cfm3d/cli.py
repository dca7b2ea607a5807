"""Command-line interface.

Exit codes: 0 success, 1 operation error, 2 usage error. Numbers are printed
with 9 significant digits. Models are read from JSON files written by ``fit``
or ``export-model``; ``builtin:ur10e``, ``builtin:kuka30`` and
``builtin:kuka10`` name the published coefficient sets.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from cfm3d import baselines, evaluation, mechanics, presets
from cfm3d.dataio import (
    DEVICE_LIMIT_N,
    GridSpec,
    MeasurementSet,
    filter_valid,
    parse_datasets,
    serialize_dataset,
    slice_height,
    split_train_test,
    synthesize_dataset,
)
from cfm3d.errors import CFMError, ExtrapolationWarning, UnmatchedStateWarning
from cfm3d.fitting import RMSE_SCALES, dumps_model, fit_cfm2d, fit_ols, load_model, select_terms
from cfm3d.prediction import (
    SafetyQuery,
    fmt,
    force_map,
    map_to_csv,
    map_to_grid,
    max_safe_velocity,
    predict_force,
    speed_map,
    velocity_monotone,
)

BUILTIN = "builtin:"


class OperationError(Exception):
    pass


# -- argument types ------------------------------------------------------------

def _number(check, what):
    def conv(text):
        try:
            x = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not check(x):
            raise argparse.ArgumentTypeError(f"must be {what}, got {text}")
        return x
    return conv


positive = _number(lambda x: 0 < x < math.inf, "> 0 and finite")
nonneg = _number(lambda x: 0 <= x < math.inf, ">= 0 and finite")
finite = _number(math.isfinite, "finite")
margin = _number(lambda x: 1 <= x < math.inf, ">= 1")
unit_interval = _number(lambda x: 0 < x < 1, "in (0, 1)")
mass_or_inf = _number(lambda x: x > 0, "> 0 (or 'inf')")


def positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def levels(text):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None
    if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError("levels must be non-empty and strictly increasing")
    return vals


def direction(text):
    try:
        x, y = (float(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'x,y'") from None
    norm = math.hypot(x, y)
    if norm == 0:
        raise argparse.ArgumentTypeError("direction must be non-zero")
    return (x / norm, y / norm)


# -- helpers ---------------------------------------------------------------------

def _load_model(ref: str):
    if ref.startswith(BUILTIN):
        try:
            return presets.published_model(ref[len(BUILTIN):])
        except KeyError as exc:
            raise OperationError(exc.args[0]) from None
    try:
        return load_model(ref)
    except FileNotFoundError:
        raise OperationError(f"model file not found: {ref}") from None
    except (ValueError, KeyError) as exc:
        raise OperationError(f"cannot read model {ref}: {exc}") from None


def _read_sets(path: str, labels=None, max_force=None) -> dict[str, MeasurementSet]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            sets = parse_datasets(fh)
    except FileNotFoundError:
        raise OperationError(f"data file not found: {path}") from None
    if labels:
        missing = [lb for lb in labels if lb not in sets]
        if missing:
            raise OperationError(f"labels not in {path}: {', '.join(missing)}")
        sets = {lb: sets[lb] for lb in labels}
    if max_force is not None:
        sets = {lb: filter_valid(s, max_force) for lb, s in sets.items()}
    return sets


def _one_set(path, label, max_force) -> MeasurementSet:
    sets = _read_sets(path, [label] if label else None, max_force)
    if len(sets) != 1:
        raise OperationError(f"{path} holds labels {', '.join(sets)}; pick one with --label")
    return next(iter(sets.values()))


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _map_grid(args, model=None) -> GridSpec:
    d_lv, h_lv = args.d_levels, args.h_levels
    if model is not None:
        if d_lv is None:
            d_lv = tuple(np.linspace(*model.domain.distance_m, args.n).round(12))
        if h_lv is None:
            h_lv = tuple(np.linspace(*model.domain.height_m, args.n).round(12))
    if d_lv is None or h_lv is None:
        raise OperationError("give --d-levels and --h-levels")
    return GridSpec(d_lv, h_lv)


def _add_grid_opts(p, n_default=True):
    p.add_argument("--d-levels", type=levels, help="distance levels, comma-separated (m)")
    p.add_argument("--h-levels", type=levels, help="height levels, comma-separated (m)")
    if n_default:
        p.add_argument("--n", type=positive_int, default=5,
                       help="levels per axis when taken from the model domain (count, default 5)")
    p.add_argument("--format", choices=("csv", "grid"), default="csv", help="output format (default csv)")
    p.add_argument("--out", help="write to this file instead of stdout")


def _train_grid(choice: str, label: str):
    if choice == "none":
        return None
    key = label if choice == "auto" else choice
    if key not in presets.TRAIN_GRIDS:
        raise OperationError(f"no preset training grid for {key!r}")
    return presets.TRAIN_GRIDS[key]


# -- subcommands ------------------------------------------------------------------

def cmd_fit(args):
    sets = _read_sets(args.data, args.label, args.max_force)
    datasets = []
    for label, s in sets.items():
        grid = _train_grid(args.train_grid, label)
        if grid is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UnmatchedStateWarning)
                s, _ = split_train_test(s, grid)
        datasets.append(s)
    sel = select_terms(datasets, args.degree, args.alpha, args.stop, args.rmse_scale)
    lines = [f"pool: {len(sel.pool) - 1} terms + intercept",
             f"aliased: {', '.join(map(str, sel.aliased)) or '-'}",
             f"stage one: {len(sel.stage_one) - 1} terms + intercept"]
    lines += [f"  removed {st.removed} (score {fmt(st.score)})" for st in sel.steps]
    lines.append(f"stop score: {fmt(sel.stop_score) if sel.stop_score is not None else '-'}")
    lines.append(f"final terms: {', '.join(map(str, sel.final))}")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for ds in datasets:
        model = fit_ols(ds, sel.final)
        coefs = " ".join(f"{t}={fmt(c)}" for t, c in zip(model.terms, model.coefficients))
        dg = model.diagnostics
        lines.append(f"{ds.label}: n={dg.n_samples} rmse={fmt(dg.rmse)} rmse_n={fmt(dg.rmse_n)} r2={fmt(dg.r2)}")
        lines.append(f"  {coefs}")
        if out_dir:
            (out_dir / f"{ds.label}.model").write_text(dumps_model(model), encoding="utf-8")
    sys.stdout.write("\n".join(lines) + "\n")


def cmd_fit2d(args):
    ds = _one_set(args.data, args.label, args.max_force)
    sliced = slice_height(ds, args.height)
    if len(sliced) == 0:
        raise OperationError(f"no samples at height {args.height:g} m")
    _emit(dumps_model(fit_cfm2d(sliced)), args.out)


def cmd_export_model(args):
    _emit(dumps_model(_load_model(args.model)), args.out)


def _warn_extrapolation(model, d, h, v):
    if not bool(model.in_domain(d, h, v)):
        print(f"note: ({fmt(d)}, {fmt(h)}, {fmt(v)}) lies outside the model's fitted domain", file=sys.stderr)


def cmd_predict(args):
    model = _load_model(args.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        force = predict_force(model, args.distance, args.height, args.velocity)
    _warn_extrapolation(model, args.distance, args.height, args.velocity)
    print(fmt(force))


def cmd_safe_speed(args):
    model = _load_model(args.model)
    res = max_safe_velocity(model, SafetyQuery(args.fmax, args.margin, args.distance, args.height))
    if res.clamped:
        print("note: clamped to the top of the fitted velocity range", file=sys.stderr)
    if res.extrapolated:
        print("note: result lies outside the model's fitted domain", file=sys.stderr)
    if not velocity_monotone(model):
        print("note: force is not increasing in velocity everywhere in the model domain", file=sys.stderr)
    print(fmt(res.velocity_mps))


def _render_map(wmap, args):
    _emit(map_to_csv(wmap) if args.format == "csv" else map_to_grid(wmap), args.out)


def cmd_force_map(args):
    model = _load_model(args.model)
    _render_map(force_map(model, _map_grid(args, model), args.velocity), args)


def cmd_speed_map(args):
    model = _load_model(args.model)
    _render_map(speed_map(model, _map_grid(args, model), SafetyQuery(args.fmax, args.margin)), args)


def cmd_effmass(args):
    arm = mechanics.load_arm(args.arm) if args.arm else mechanics.THREE_LINK_ARM
    if args.inertia_model:
        arm = mechanics.PlanarArm(arm.link_lengths_m, arm.link_masses_kg, args.inertia_model)
    if args.distance is not None and args.height is not None:
        q = mechanics.ik_planar3(arm, (args.distance, args.height), args.orientation, args.elbow)
        m = mechanics.effective_mass(arm, q, args.direction)
        print("inf" if math.isinf(m) else fmt(m))
        return
    if args.distance is not None or args.height is not None:
        raise OperationError("give both -d and -H for a single point, or neither for a map")
    grid = _map_grid(args)
    _render_map(mechanics.effective_mass_map(arm, grid, args.direction, args.orientation, args.elbow), args)


def cmd_baseline(args):
    if args.which == "pfl":
        p = baselines.PFLParams(args.fmax, args.k, args.mr, args.mh)
        print(fmt(baselines.pfl_max_velocity(p)))
    elif args.which == "force":
        p = baselines.PFLParams(k_spring_npm=args.k, m_robot_kg=args.mr, m_human_kg=args.mh)
        print(fmt(baselines.pfl_force(args.velocity, p)))
    else:
        print(fmt(baselines.effective_mass_ts15066(args.moving_mass, args.payload)))


def _render_reports(reports, worse, args):
    text = evaluation.report_csv(reports) if args.format == "csv" else evaluation.report_table(reports, worse)
    _emit(text, args.out)


def cmd_evaluate(args):
    model = _load_model(args.model)
    test = _one_set(args.data, args.label, args.max_force)
    _render_reports({model.label or "model": evaluation.estimation_errors(model, test)}, None, args)


def cmd_compare(args):
    model = _load_model(args.model)
    test = _one_set(args.data, args.label, args.max_force)
    predictors = [("3d-cfm", evaluation.cfm3d_predictor(model))]
    if args.train2d:
        train = _one_set(args.train2d, args.label, args.max_force)
        ensemble = evaluation.per_height_cfm2d(train)
        predictors.append(("2d-cfm", evaluation.cfm2d_ensemble_predictor(ensemble)))
    pfl = baselines.PFLParams(k_spring_npm=args.k, m_robot_kg=args.mr, m_human_kg=args.mh)
    predictors.append(("pfl", evaluation.pfl_predictor(pfl)))
    cmp = evaluation.compare_models(predictors, test, "3d-cfm")
    _render_reports(cmp.reports, cmp.worse, args)


def cmd_synth(args):
    model = _load_model(args.model)
    if args.grid:
        grid = presets.measurement_grid(args.grid)
        if args.train_only:
            grid = presets.TRAIN_GRIDS[args.grid]
    else:
        if not (args.d_levels and args.h_levels and args.v_levels):
            raise OperationError("give --grid or all of --d-levels, --h-levels, --v-levels")
        grid = GridSpec(args.d_levels, args.h_levels, args.v_levels)
    mset = synthesize_dataset(model, grid, args.noise, args.reps, args.seed, args.label)
    _emit(serialize_dataset(mset), args.out)


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfm3d", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def model_arg(p):
        p.add_argument("--model", required=True, help="model file, or builtin:ur10e|kuka30|kuka10")

    def point_args(p, velocity=False):
        p.add_argument("-d", "--distance", type=positive, required=True, help="distance from base axis (m)")
        p.add_argument("-H", "--height", type=positive, required=True, help="height above base (m)")
        if velocity:
            p.add_argument("-v", "--velocity", type=positive, required=True, help="end-effector speed (m/s)")

    def data_args(p):
        p.add_argument("--label", help="dataset label to use when the file holds several")
        p.add_argument("--max-force", type=positive, default=DEVICE_LIMIT_N,
                       help=f"drop samples above this force (N); samples exactly at it are kept "
                            f"(default {DEVICE_LIMIT_N:g})")

    p = sub.add_parser("fit", help="select terms over datasets and fit one 3D CFM per dataset")
    p.add_argument("--data", required=True, help="measurement CSV (one dataset per label)")
    p.add_argument("--label", action="append", help="restrict to this label (repeatable)")
    p.add_argument("--max-force", type=positive, default=DEVICE_LIMIT_N,
                   help=f"drop samples above this force (N); samples exactly at it are kept (default {DEVICE_LIMIT_N:g})")
    p.add_argument("--train-grid", default="none", choices=("none", "auto") + presets.NAMES,
                   help="keep only states on a preset training grid; 'auto' picks it by label (default none)")
    p.add_argument("--degree", type=positive_int, default=3, help="total degree of the term pool (count, default 3)")
    p.add_argument("--alpha", type=unit_interval, default=0.05, help="p-value cut for stage one (dimensionless, default 0.05)")
    p.add_argument("--stop", type=nonneg, default=0.5, help="elimination stop score (dimensionless, default 0.5)")
    p.add_argument("--rmse-scale", choices=RMSE_SCALES, default="newton",
                   help="RMSE used in the elimination score: newtons or ln F (default newton)")
    p.add_argument("--out-dir", help="write <label>.model files here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit2d", help="fit a 2D CFM (1, v, d, d^2) at one height")
    p.add_argument("--data", required=True, help="measurement CSV")
    data_args(p)
    p.add_argument("-H", "--height", type=positive, required=True, help="height slice (m)")
    p.add_argument("--out", help="write model here instead of stdout")
    p.set_defaults(func=cmd_fit2d)

    p = sub.add_parser("export-model", help="write a model (e.g. a builtin one) as a model file")
    model_arg(p)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("predict", help="predicted peak force (N)")
    model_arg(p)
    point_args(p, velocity=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("safe-speed", help="maximum safe end-effector speed (m/s)")
    model_arg(p)
    point_args(p)
    p.add_argument("--fmax", type=positive, required=True, help="permissible force (N)")
    p.add_argument("--margin", type=margin, default=1.10, help="multiplier on predicted force (>= 1, default 1.10)")
    p.set_defaults(func=cmd_safe_speed)

    p = sub.add_parser("force-map", help="predicted force over a (d, h) grid at fixed speed")
    model_arg(p)
    p.add_argument("-v", "--velocity", type=positive, required=True, help="end-effector speed (m/s)")
    _add_grid_opts(p)
    p.set_defaults(func=cmd_force_map)

    p = sub.add_parser("speed-map", help="maximum safe speed over a (d, h) grid")
    model_arg(p)
    p.add_argument("--fmax", type=positive, required=True, help="permissible force (N)")
    p.add_argument("--margin", type=margin, default=1.10, help="multiplier on predicted force (>= 1, default 1.10)")
    _add_grid_opts(p)
    p.set_defaults(func=cmd_speed_map)

    p = sub.add_parser("effmass", help="effective mass of a planar arm at a point or over a grid (kg)")
    p.add_argument("--arm", help="arm description JSON (default: 3-link arm, masses 13/4/4 kg, lengths 0.5/0.45/0.05 m)")
    p.add_argument("--inertia-model", choices=mechanics.INERTIA_MODELS, help="override the arm's link inertia model")
    p.add_argument("-d", "--distance", type=finite, help="target distance (m)")
    p.add_argument("-H", "--height", type=finite, help="target height (m)")
    p.add_argument("--orientation", type=finite, default=-math.pi / 2,
                   help="end-effector orientation (rad, default -pi/2 = pointing down)")
    p.add_argument("--elbow", choices=("up", "down"), default="up", help="IK branch (default up)")
    p.add_argument("--direction", type=direction, default=mechanics.DOWN, help="impact direction 'x,y' (unit vector, dimensionless, default 0,-1)")
    _add_grid_opts(p, n_default=False)
    p.set_defaults(func=cmd_effmass)

    p = sub.add_parser("baseline", help="ISO/TS 15066 PFL formulas")
    bsub = p.add_subparsers(dest="which", required=True, metavar="KIND")
    for name, helptext in (("pfl", "max permissible speed (m/s)"), ("force", "force at a given speed (N)")):
        b = bsub.add_parser(name, help=helptext)
        if name == "pfl":
            b.add_argument("--fmax", type=positive, default=baselines.F_QUASI_STATIC_N,
                           help=f"permissible force (N, default {baselines.F_QUASI_STATIC_N:g})")
        else:
            b.add_argument("-v", "--velocity", type=nonneg, required=True, help="relative speed (m/s)")
        b.add_argument("--k", type=positive, default=baselines.K_HAND_NPM,
                       help=f"body-part spring constant (N/m, default {baselines.K_HAND_NPM:g})")
        b.add_argument("--mr", type=positive, required=True, help="effective robot mass (kg)")
        b.add_argument("--mh", type=mass_or_inf, default=math.inf, help="human body-part mass (kg, 'inf' = constrained)")
        b.set_defaults(func=cmd_baseline)
    b = bsub.add_parser("mass", help="effective robot mass M/2 + payload (kg)")
    b.add_argument("--moving-mass", type=nonneg, required=True, help="total moving mass M (kg)")
    b.add_argument("--payload", type=nonneg, default=0.0, help="payload (kg, default 0)")
    b.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="under/overestimation of a model on measured data")
    model_arg(p)
    p.add_argument("--data", required=True, help="measurement CSV")
    data_args(p)
    p.add_argument("--format", choices=("table", "csv"), default="table", help="output format (default table)")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="3D CFM vs per-height 2D CFM vs PFL on measured data")
    model_arg(p)
    p.add_argument("--data", required=True, help="test measurement CSV")
    p.add_argument("--train2d", help="CSV to fit the per-height 2D models on (omit to skip them)")
    data_args(p)
    p.add_argument("--k", type=positive, default=baselines.K_HAND_NPM, help="PFL spring constant (N/m)")
    p.add_argument("--mr", type=positive, required=True, help="PFL effective robot mass (kg)")
    p.add_argument("--mh", type=mass_or_inf, default=math.inf, help="PFL human mass (kg, default inf)")
    p.add_argument("--format", choices=("table", "csv"), default="table",
                   help="output format (default table; '*' marks cells worse than the 3D CFM)")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="synthesize a measurement CSV from a model")
    model_arg(p)
    p.add_argument("--grid", choices=presets.NAMES, help="use a preset measurement grid")
    p.add_argument("--train-only", action="store_true", help="with --grid: only the training states")
    p.add_argument("--d-levels", type=levels, help="distance levels (m)")
    p.add_argument("--h-levels", type=levels, help="height levels (m)")
    p.add_argument("--v-levels", type=levels, help="velocity levels (m/s)")
    p.add_argument("--noise", type=nonneg, default=0.0, help="Gaussian force noise SD (N, default 0)")
    p.add_argument("--reps", type=positive_int, default=1, help="repetitions per state (count, default 1)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--label", help="dataset label (default: model label)")
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (OperationError, CFMError, OSError) as exc:
        print(f"cfm3d {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

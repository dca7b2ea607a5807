import json
import re

import pytest

from cfm3d.cli import build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_safe_speed_ur10e(capsys):
    code, out, _ = run(capsys, "safe-speed", "--model", "builtin:ur10e", "-d", "0.8", "-H", "0.4",
                       "--fmax", "140", "--margin", "1.0")
    assert code == 0
    assert float(out.split()[0]) == pytest.approx(0.16, abs=0.01)


def test_safe_speed_from_model_file(capsys, tmp_path):
    path = tmp_path / "ur10e.model"
    assert run(capsys, "export-model", "--model", "builtin:ur10e", "--out", str(path))[0] == 0
    code, out, _ = run(capsys, "safe-speed", "--model", str(path), "-d", "0.8", "-H", "0.4",
                       "--fmax", "140", "--margin", "1.0")
    assert code == 0 and float(out.split()[0]) == pytest.approx(0.159017017, abs=1e-9)


def test_baseline_pfl(capsys):
    code, out, _ = run(capsys, "baseline", "pfl", "--fmax", "140", "--k", "75000", "--mr", "15", "--mh", "inf")
    assert code == 0 and float(out) == pytest.approx(0.13, abs=0.005)


def test_predict_and_baselines(capsys):
    assert float(run(capsys, "predict", "--model", "builtin:ur10e", "-d", "0.8", "-H", "0.4", "-v", "0.36")[1]) == \
        pytest.approx(280, rel=0.05)
    assert float(run(capsys, "baseline", "force", "-v", "0.3", "--mr", "15")[1]) == pytest.approx(318.198052)
    assert float(run(capsys, "baseline", "mass", "--moving-mass", "30")[1]) == 15


def test_missing_model_file(capsys, tmp_path):
    code, out, err = run(capsys, "predict", "--model", str(tmp_path / "missing.file"), "-d", "0.8", "-H", "0.4",
                         "-v", "0.2")
    assert code == 1 and out == ""
    assert "missing.file" in err and "not found" in err


def test_usage_errors(capsys):
    for argv in (["bogus"], ["predict", "--model", "builtin:ur10e", "--nope"], ["baseline", "pfl", "--mr", "-1"],
                 ["safe-speed", "--model", "builtin:ur10e", "-d", "0.8", "-H", "0.4", "--fmax", "140",
                  "--margin", "0.5"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    capsys.readouterr()


def test_infeasible_speed_is_operation_error(capsys):
    code, _, err = run(capsys, "safe-speed", "--model", "builtin:ur10e", "-d", "0.6", "-H", "0.2", "--fmax", "5")
    assert code == 1 and "exceeds" in err


def test_maps(capsys):
    code, out, _ = run(capsys, "speed-map", "--model", "builtin:ur10e", "--fmax", "140", "--margin", "1.0",
                       "--d-levels", "0.52,0.8", "--h-levels", "0.14,0.4")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "distance_m,height_m,value,flags" and lines[1] == "0.52,0.14,unsafe,unsafe"
    code, out, _ = run(capsys, "effmass", "--d-levels", "0.5,0.8", "--h-levels", "0.1,0.4", "--format", "grid")
    assert code == 0 and "# inertia_model: uniform-rod" in out
    code, out, _ = run(capsys, "force-map", "--model", "builtin:kuka10", "-v", "0.3", "--n", "3")
    assert code == 0 and len(out.splitlines()) == 10


def test_synth_fit_evaluate_pipeline(capsys, tmp_path):
    data = tmp_path / "data.csv"
    for name, seed in (("ur10e", 1), ("kuka30", 2), ("kuka10", 3)):
        code, out, _ = run(capsys, "synth", "--model", f"builtin:{name}", "--grid", name, "--train-only",
                           "--noise", "1.12", "--reps", "3", "--seed", str(seed))
        assert code == 0
        with open(data, "a", encoding="utf-8") as fh:
            fh.write(out if name == "ur10e" else out.split("\n", 1)[1])
    models = tmp_path / "models"
    code, out, err = run(capsys, "fit", "--data", str(data), "--out-dir", str(models))
    assert code == 0, err
    stored = json.loads((models / "ur10e.model").read_text())
    assert len(stored["terms"]) == 9
    code, out, _ = run(capsys, "evaluate", "--model", str(models / "ur10e.model"), "--data", str(data),
                       "--label", "ur10e", "--format", "csv")
    assert code == 0 and out.startswith("predictor,max_ue_pct")


def test_compare(capsys, tmp_path):
    data = tmp_path / "ur.csv"
    run(capsys, "synth", "--model", "builtin:ur10e", "--grid", "ur10e", "--noise", "1.12", "--reps", "3",
        "--out", str(data))
    code, out, err = run(capsys, "compare", "--model", "builtin:ur10e", "--data", str(data), "--train2d", str(data),
                         "--mr", "15")
    assert code == 0, err
    assert out.splitlines()[0].startswith("predictor")


def test_deterministic_output(capsys, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"s{i}.csv"
        run(capsys, "synth", "--model", "builtin:kuka30", "--grid", "kuka30", "--train-only", "--noise", "2",
            "--reps", "3", "--seed", "5", "--out", str(path))
        code, out, _ = run(capsys, "fit", "--data", str(path))
        assert code == 0
        outs.append((path.read_bytes(), out))
    assert outs[0] == outs[1]


def _subparsers(parser):
    for action in parser._actions:
        if action.__class__.__name__ == "_SubParsersAction":
            for name, sub in action.choices.items():
                yield name, sub
                yield from _subparsers(sub)


# A unit (or an explicit "count"/"dimensionless") opens the parenthesised note.
UNIT = re.compile(r"\((m|m/s|N|N/m|kg|rad|count|dimensionless|unit vector|>= 1)[,)]")


def test_every_flag_documented():
    for name, sub in _subparsers(build_parser()):
        for action in sub._actions:
            if not action.option_strings or "-h" in action.option_strings:
                continue
            assert action.help, f"{name} {action.option_strings} has no help"
            if action.type is not None and action.type not in (str, int):
                assert UNIT.search(action.help), f"{name} {action.option_strings}: {action.help}"


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["speed-map", "--help"])
    assert exc.value.code == 0
    assert "--fmax" in capsys.readouterr().out

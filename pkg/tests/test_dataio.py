import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

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
from cfm3d.errors import ContractError, DatasetError, ParseError, UnmatchedStateWarning
from cfm3d.presets import (
    UR10E_GRID,
    UR10E_TRAIN_GRID,
    drop_missing_positions,
    published_model,
)

HEADER = "label,distance_m,height_m,velocity_mps,force_n,repetition\n"


def test_parse_single_row():
    mset = parse_dataset(HEADER + "ur10e,0.52,0.14,0.20,150.0,1\n")
    assert mset.label == "ur10e"
    assert mset.samples == (MeasurementSample(0.52, 0.14, 0.20, 150.0, 1),)


def test_parse_crlf():
    mset = parse_dataset(io.StringIO(HEADER.replace("\n", "\r\n") + "a,1,1,1,10,1\r\na,1,1,1,11,2\r\n", newline=""))
    assert [s.force_n for s in mset] == [10.0, 11.0]


def test_header_only_is_empty_dataset():
    with pytest.raises(DatasetError):
        parse_dataset(HEADER)


def test_empty_file():
    with pytest.raises(DatasetError):
        parse_dataset("")


def test_non_numeric_force_names_line():
    text = HEADER + "ur10e,0.52,0.14,0.20,150.0,1\nur10e,0.52,0.14,0.20,abc,2\n"
    with pytest.raises(ParseError) as exc:
        parse_dataset(text)
    assert exc.value.line == 3


def test_wrong_column_count():
    with pytest.raises(ParseError) as exc:
        parse_dataset(HEADER + "ur10e,0.52,0.14,150.0,1\n")
    assert exc.value.line == 2


def test_bad_header():
    with pytest.raises(ParseError):
        parse_dataset("d,h,v,f\n1,1,1,1\n")


def test_multi_label_split():
    text = HEADER + "a,1,1,1,10,1\nb,1,1,1,20,1\na,2,1,1,30,1\n"
    sets = parse_datasets(text)
    assert list(sets) == ["a", "b"]
    assert [s.force_n for s in sets["a"]] == [10.0, 30.0]
    with pytest.raises(ContractError):
        parse_dataset(text)


def _set(forces, label="x"):
    return MeasurementSet(tuple(MeasurementSample(0.5, 0.2, 0.3, f, 1) for f in forces), label)


def test_filter_keeps_boundary():
    out = filter_valid(_set([499, 500, 501]), 500)
    assert [s.force_n for s in out] == [499, 500]
    assert "removed 1" in out.provenance[-1]


def test_filter_noop():
    mset = _set([10, 20])
    assert filter_valid(mset, 500) == mset


def test_filter_all_removed():
    with pytest.raises(DatasetError):
        filter_valid(_set([600, 700]), 500)


def test_filter_rejects_nonpositive_limit():
    with pytest.raises(ContractError):
        filter_valid(_set([1]), 0)


def test_split_campaign_state_counts():
    full = drop_missing_positions(synthesize_dataset(published_model("ur10e"), UR10E_GRID))
    train, test = split_train_test(full, UR10E_TRAIN_GRID)
    assert len(train.states()) == 27
    assert len(test.states()) == 88


def test_split_full_overlap():
    grid = GridSpec((0.5, 0.6), (0.2,), (0.2, 0.3))
    mset = synthesize_dataset(published_model("ur10e"), grid)
    train, test = split_train_test(mset, grid)
    assert len(train) == len(mset) and len(test) == 0


def test_split_tolerance_zero_matches_tiny_tolerance():
    mset = synthesize_dataset(published_model("ur10e"), UR10E_GRID)
    assert split_train_test(mset, UR10E_TRAIN_GRID, 0.0) == split_train_test(mset, UR10E_TRAIN_GRID, 1e-9)


def test_split_warns_on_unmatched_state():
    grid = GridSpec((0.5,), (0.2,), (0.2,))
    mset = synthesize_dataset(published_model("ur10e"), GridSpec((0.6,), (0.2,), (0.2,)))
    with pytest.warns(UnmatchedStateWarning):
        train, test = split_train_test(mset, grid)
    assert len(train) == 0 and len(test) == 1


def test_synth_zero_noise_equals_model():
    m = published_model("ur10e")
    mset = synthesize_dataset(m, UR10E_TRAIN_GRID, 0.0, 2)
    for s in mset:
        assert s.force_n == pytest.approx(math.exp(m.linear_predictor(*s.state)), rel=1e-15)


def test_synth_deterministic():
    m = published_model("kuka30")
    a = synthesize_dataset(m, UR10E_TRAIN_GRID, 2.0, 3, seed=7)
    b = synthesize_dataset(m, UR10E_TRAIN_GRID, 2.0, 3, seed=7)
    assert a == b
    assert a != synthesize_dataset(m, UR10E_TRAIN_GRID, 2.0, 3, seed=8)


def test_synth_noise_sd():
    # Pooled within-state SD over 27 states x 3 repetitions tracks the requested SD.
    m = published_model("ur10e")
    mset = synthesize_dataset(m, UR10E_TRAIN_GRID, 1.12, 3, seed=3)
    f = np.array([s.force_n for s in mset]).reshape(27, 3)
    sds = f.std(axis=1, ddof=1)
    assert np.mean(sds) == pytest.approx(1.12, rel=0.3)


def test_synth_flags_out_of_domain():
    m = published_model("ur10e")
    mset = synthesize_dataset(m, GridSpec((0.3, 0.6), (0.2,), (0.3,)))
    assert mset.samples[0].flags == ("out-of-domain",)
    assert mset.samples[1].flags == ()


def test_grid_must_increase():
    with pytest.raises(ContractError):
        GridSpec((0.5, 0.4), (0.1,), (0.2,))


def test_sample_invariants():
    with pytest.raises(ContractError):
        MeasurementSample(0.5, 0.2, 0.3, 0.0)
    with pytest.raises(ContractError):
        MeasurementSample(-0.5, 0.2, 0.3, 10.0)


pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)
samples = st.builds(MeasurementSample, pos, pos, pos, pos, st.integers(1, 5))
labels = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_- ", min_size=1, max_size=12).map(str.strip).filter(bool)


@given(st.lists(samples, min_size=1, max_size=30), labels)
def test_serialize_roundtrip(items, label):
    mset = MeasurementSet(tuple(items), label)
    assert parse_dataset(serialize_dataset(mset)) == mset


@given(st.lists(samples, min_size=1, max_size=30), st.floats(1.0, 1e3))
def test_filter_idempotent(items, limit):
    mset = MeasurementSet(tuple(items), "x")
    try:
        once = filter_valid(mset, limit)
    except DatasetError:
        return
    assert filter_valid(once, limit) == once


@given(st.lists(st.tuples(st.sampled_from(UR10E_GRID.distances_m), st.sampled_from(UR10E_GRID.heights_m),
                          st.sampled_from(UR10E_GRID.velocities_mps), st.floats(1, 400)), max_size=40))
def test_split_partitions(rows):
    mset = MeasurementSet(tuple(MeasurementSample(d, h, v, f) for d, h, v, f in rows), "x")
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnmatchedStateWarning)
        train, test = split_train_test(mset, UR10E_TRAIN_GRID)
    assert len(train) + len(test) == len(mset)
    assert sorted(train.samples + test.samples, key=repr) == sorted(mset.samples, key=repr)
    g = UR10E_TRAIN_GRID
    assert all(s.distance_m in g.distances_m and s.height_m in g.heights_m and s.velocity_mps in g.velocities_mps
               for s in train)

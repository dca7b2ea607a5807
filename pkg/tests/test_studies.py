import warnings

from cfm3d.dataio import DEVICE_LIMIT_N
from cfm3d.studies import CUBES, baseline_comparison, recovery_trial


def test_recovery_trial_is_deterministic():
    a, b = recovery_trial(3), recovery_trial(3)
    assert a == b and a.exact and a.cubes_pruned
    assert set(CUBES) <= set(a.aliased)


def test_sensor_ceiling_drops_samples():
    t = recovery_trial(0, max_force_n=DEVICE_LIMIT_N)
    assert t.n_samples[0] < 81


def test_baseline_comparison_is_quiet_and_ordered():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cmp = baseline_comparison(seed=1)
    assert list(cmp.reports) == ["3D CFM", "2D CFM", "PFL"]
    assert cmp.worse["2D CFM"]["mean_ue_n"]

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdnet.errors import EmptyEnsemble, OutOfRangeProbability, ShapeMismatch
from mdnet.uncertainty import (ensemble_mean, save_uncertainty_maps, uncertainty_from_prob,
                               uncertainty_score)
from mdnet.volume import ProbabilityMapSet, load_array


def _pm(value, shape=(2, 3, 4)):
    a = np.full(shape, value, np.float32)
    return ProbabilityMapSet(a, a, a)


def test_score_examples():
    assert uncertainty_score(0.5) == 100
    assert uncertainty_score(0.0) == 0 and uncertainty_score(1.0) == 0
    assert abs(uncertainty_score(0.3) - 60) < 1e-12
    assert abs(uncertainty_score(0.7) - 60) < 1e-12


def test_score_rejects_out_of_range():
    for bad in (-0.01, 1.01, np.nan):
        with pytest.raises(OutOfRangeProbability):
            uncertainty_score(np.array([0.2, bad]))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1))
def test_score_symmetric_and_bounded(p):
    u = uncertainty_score(p)
    assert 0 <= u <= 100
    assert abs(u - uncertainty_score(1 - p)) < 1e-9


def test_score_peaks_at_half():
    p = np.linspace(0, 1, 1001)
    u = uncertainty_score(p)
    assert np.argmax(u) == 500
    assert np.all(np.diff(u[:501]) > 0) and np.all(np.diff(u[500:]) < 0)


def test_uint8_maps_round_half_up():
    p = np.array([0.0, 0.0025, 0.3, 0.5, 0.9975, 1.0], np.float32)
    unc = uncertainty_from_prob(ProbabilityMapSet(p, p, p))
    assert unc.u_whole.dtype == np.uint8
    expected = np.floor(uncertainty_score(p) + 0.5)
    assert np.array_equal(unc.u_core, expected.astype(np.uint8))
    assert unc.u_enh.max() == 100


def test_ensemble_examples():
    one = _pm(0.3)
    assert np.allclose(ensemble_mean([one]).p_core, 0.3)
    assert np.allclose(ensemble_mean([_pm(0.2), _pm(0.8)]).p_whole, 0.5)
    with pytest.raises(EmptyEnsemble):
        ensemble_mean([])
    with pytest.raises(ShapeMismatch):
        ensemble_mean([_pm(0.2), _pm(0.2, (2, 2, 2))])


def test_ensemble_matches_mean_oracle():
    rng = np.random.default_rng(0)
    members = [ProbabilityMapSet(*(rng.random((4, 4, 4)).astype(np.float32) for _ in range(3)))
               for _ in range(7)]
    mean = ensemble_mean(members)
    for r in range(3):
        oracle = np.zeros((4, 4, 4))
        for m in members:
            oracle += m.as_tuple()[r].astype(np.float64)
        oracle /= 7
        assert np.max(np.abs(mean.as_tuple()[r] - oracle)) < 1e-7


def test_save_maps(tmp_path):
    unc = uncertainty_from_prob(_pm(0.3))
    paths = save_uncertainty_maps(unc, "case_0001", tmp_path)
    assert [p.name for p in paths] == ["case_0001_unc_whole.nii.gz", "case_0001_unc_core.nii.gz",
                                       "case_0001_unc_enhance.nii.gz"]
    data, _ = load_array(paths[2])
    assert data.dtype == np.uint8 and np.all(data == 60)

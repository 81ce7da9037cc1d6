import warnings

import numpy as np
import pytest

from mdnet.preprocess import (DegenerateChannelWarning, PreprocessConfig, crop_or_pad,
                              gaussian_denoise, median_denoise, preprocess_case, restore_shape,
                              stack_denoised, zscore_normalize)
from mdnet.volume import MultiModalVolume, PhantomNoiseConfig, make_phantom
from oracles import brute_median, dense_gaussian


def test_zscore_known_channel():
    rng = np.random.default_rng(0)
    x = rng.normal(5, 2, (1, 10, 10, 10))
    x = (x - x.mean()) / x.std() * 2 + 5
    vol = MultiModalVolume(x, channel_names=("a",))
    out = zscore_normalize(vol, PreprocessConfig(normalize_support="all")).data[0]
    assert abs(out.mean()) < 1e-5
    assert abs(out.std() - 1) < 1e-5


def test_zscore_constant_channel_warns():
    vol = MultiModalVolume(np.full((2, 4, 4, 4), 3.0), channel_names=("a", "b"))
    with pytest.warns(DegenerateChannelWarning):
        out = zscore_normalize(vol)
    assert not out.data.any()


def test_zscore_phantom_matches_two_pass_oracle():
    vol, _ = make_phantom(2, (24, 24, 24))
    out = zscore_normalize(vol).data
    for c in range(4):
        x = vol.data[c].astype(np.float64)
        sel = x != 0
        n = sel.sum()
        mean = x[sel].sum() / n
        std = np.sqrt(((x[sel] - mean) ** 2).sum() / n)
        expected = np.where(sel, (x - mean) / std, 0.0)
        assert np.max(np.abs(out[c] - expected)) < 1e-5
        assert abs(out[c][sel].mean()) < 1e-5 and abs(out[c][sel].std() - 1) < 1e-5
        assert np.all(out[c][~sel] == 0)


def test_crop_or_pad_full_size_roundtrip():
    rng = np.random.default_rng(1)
    a = rng.random((2, 240, 240, 155)).astype(np.float32)
    out, info = crop_or_pad(a, (160, 192, 128))
    assert out.shape == (2, 160, 192, 128)
    back = restore_shape(out, info)
    assert back.shape == a.shape
    assert np.array_equal(back[:, 40:200, 24:216, 13:141], a[:, 40:200, 24:216, 13:141])
    assert not back[:, :40].any()


def test_crop_or_pad_identity():
    a = np.arange(4 * 5 * 6).reshape(4, 5, 6)
    out, info = crop_or_pad(a, (4, 5, 6))
    assert np.array_equal(out, a)
    assert np.array_equal(restore_shape(out, info), a)


@pytest.mark.parametrize("target", [(6, 8, 5), (8, 8, 8), (10, 3, 11), (5, 12, 7)])
def test_crop_or_pad_indices_brute_force(target):
    rng = np.random.default_rng(2)
    a = rng.random((8, 8, 8))
    out, info = crop_or_pad(a, target)
    expected = np.zeros(target)
    for idx in np.ndindex(*target):
        src = []
        for i, s, t in zip(idx, a.shape, target):
            # center alignment: source index = target index + (s - t) // 2 when cropping,
            # target index - (t - s) // 2 when padding
            j = i + (s - t) // 2 if s >= t else i - (t - s) // 2
            src.append(j)
        if all(0 <= j < s for j, s in zip(src, a.shape)):
            expected[idx] = a[tuple(src)]
    assert np.array_equal(out, expected)
    back = restore_shape(out, info)
    kept = restore_shape(np.ones(target), info).astype(bool)
    assert np.array_equal(back[kept], a[kept])


def test_median_constant_and_impulse():
    const = np.full((5, 5, 5), 2.5)
    assert np.array_equal(median_denoise(const), const)
    imp = np.zeros((5, 5, 5))
    imp[2, 2, 2] = 9.0
    assert np.array_equal(brute_median(imp), np.zeros_like(imp))
    assert not median_denoise(imp).any()


def test_median_random_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = rng.normal(size=(5, 5, 5))
        assert np.array_equal(median_denoise(a), brute_median(a))


def test_median_idempotent_on_piecewise_constant():
    # planar interfaces: every voxel keeps at least 18 of 27 neighbors in its own slab
    a = np.zeros((12, 12, 12))
    a[:4] = 1.0
    a[8:] = 3.0
    once = median_denoise(a)
    assert np.array_equal(once, a)
    assert np.array_equal(median_denoise(once), once)


def test_gaussian_constant():
    a = np.full((5, 6, 7), 4.2)
    assert np.max(np.abs(gaussian_denoise(a) - a)) < 1e-6


def test_gaussian_impulse_stamp():
    a = np.zeros((7, 7, 7))
    a[3, 3, 3] = 1.0
    out = gaussian_denoise(a)
    stamp = out[2:5, 2:5, 2:5]
    assert np.allclose(out.sum(), 1.0)
    assert np.allclose(stamp, stamp[::-1]) and np.allclose(stamp, stamp.transpose(1, 2, 0))
    assert np.max(np.abs(out - dense_gaussian(a))) < 1e-12
    assert np.count_nonzero(out) == 27


def test_gaussian_random_matches_dense_oracle():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = rng.normal(size=(5, 5, 5))
        assert np.max(np.abs(gaussian_denoise(a) - dense_gaussian(a))) < 1e-5


def test_gaussian_preserves_mean_on_phantom():
    vol, _ = make_phantom(6, (32, 32, 32))
    for ch in vol.data.astype(np.float64):
        assert abs(gaussian_denoise(ch).mean() - ch.mean()) < 1e-5 * max(1.0, abs(ch.mean()))


def test_stack_denoised_layout():
    vol, _ = make_phantom(7, (16, 16, 16))
    out = stack_denoised(vol)
    assert out.n_channels == 12
    assert np.array_equal(out.data[:4], vol.data)
    assert np.array_equal(out.data[4:8], median_denoise(vol.data))
    assert np.array_equal(out.data[8:], gaussian_denoise(vol.data))
    assert out.channel_names[4] == "t1_median" and out.channel_names[8] == "t1_gauss"


def test_preprocess_case_shapes():
    vol, mask = make_phantom(8, (20, 36, 24), PhantomNoiseConfig(0.0, 0.0))
    cfg = PreprocessConfig(target_shape=(24, 32, 24))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        image, seg, info = preprocess_case(vol, cfg, mask)
    assert image.data.shape == (12, 24, 32, 24)
    assert seg.shape == (24, 32, 24)
    assert restore_shape(seg.data, info).shape == mask.shape


def test_config_validation():
    with pytest.raises(ValueError):
        PreprocessConfig(median_kernel=(2, 3, 3))
    with pytest.raises(ValueError):
        PreprocessConfig(gaussian_sigma=0)

import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mdnet.errors import InvalidLabels, InvalidShape, MalformedFile, NestingViolation, VolumeIOError
from mdnet.volume import (LabelMask, MultiModalVolume, PhantomNoiseConfig, RegionMaskSet,
                          RegionSpec, labels_to_regions, load_volume, make_phantom,
                          regions_to_labels, save_volume)

label_masks = arrays(np.uint8, st.tuples(*[st.integers(1, 6)] * 3), elements=st.sampled_from([0, 1, 2, 4]))


def test_phantom_roundtrip_bit_exact(tmp_path):
    vol, mask = make_phantom(3, (20, 24, 16), spacing=(1.0, 0.9, 2.5))
    save_volume(vol, tmp_path / "img.nii.gz")
    save_volume(mask, tmp_path / "seg.nii.gz")
    back = load_volume(tmp_path / "img.nii.gz")
    seg = load_volume(tmp_path / "seg.nii.gz", label=True)
    assert back.data.dtype == vol.data.dtype
    assert np.array_equal(back.data, vol.data)
    assert np.array_equal(seg.data, mask.data)
    assert np.allclose(back.spacing, vol.spacing, atol=1e-6)
    assert np.allclose(seg.spacing, mask.spacing, atol=1e-6)
    assert back.channel_names == vol.channel_names


def test_uncompressed_nifti_roundtrip(tmp_path):
    vol, _ = make_phantom(0, (16, 16, 16))
    save_volume(vol, tmp_path / "img.nii")
    assert np.array_equal(load_volume(tmp_path / "img.nii").data, vol.data)


def test_label_value_3_rejected(tmp_path):
    bad = np.zeros((4, 4, 4), np.uint8)
    bad[1, 1, 1] = 3
    save_volume(bad, tmp_path / "bad.nii.gz")
    with pytest.raises(InvalidLabels):
        load_volume(tmp_path / "bad.nii.gz", label=True)
    with pytest.raises(InvalidLabels):
        LabelMask(bad)


def test_full_size_single_channel_shape(tmp_path):
    data = np.zeros((240, 240, 155), np.int16)
    data[100:140, 100:140, 60:90] = 7
    save_volume(data, tmp_path / "t1.nii.gz")
    vol = load_volume(tmp_path / "t1.nii.gz")
    assert vol.data.shape == (1, 240, 240, 155)


def test_uncertainty_uint8_preserved(tmp_path):
    u = np.arange(101, dtype=np.uint8).repeat(8).reshape(101, 2, 4)
    save_volume(u, tmp_path / "unc.nii.gz")
    import nibabel as nib
    img = nib.load(tmp_path / "unc.nii.gz")
    assert img.get_data_dtype() == np.uint8
    assert np.array_equal(np.asanyarray(img.dataobj), u)


def test_unwritable_path(tmp_path):
    vol, _ = make_phantom(0, (16, 16, 16))
    with pytest.raises(VolumeIOError):
        save_volume(vol, tmp_path / "missing_dir" / "x.nii.gz")


def test_malformed_file(tmp_path):
    p = tmp_path / "junk.nii.gz"
    with gzip.open(p, "wb") as fh:
        fh.write(b"not a nifti header" * 40)
    with pytest.raises(MalformedFile):
        load_volume(p)
    p2 = tmp_path / "junk.nii"
    p2.write_bytes(b"\x00" * 400)
    with pytest.raises(MalformedFile):
        load_volume(p2)


def test_volume_invariants():
    with pytest.raises(ValueError):
        MultiModalVolume(np.zeros((2, 4, 4, 4)), channel_names=("a",))
    with pytest.raises(ValueError):
        MultiModalVolume(np.zeros((1, 4, 4, 4)), spacing=(1, 0, 1), channel_names=("a",))
    bad = np.zeros((1, 4, 4, 4))
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        MultiModalVolume(bad, channel_names=("a",))


def test_region_spec_nesting_required():
    with pytest.raises(ValueError):
        RegionSpec(label_composition={"whole": (1, 2), "core": (1, 4), "enhancing": (4,)})


def test_labels_to_regions_examples():
    z = labels_to_regions(LabelMask(np.zeros((3, 3, 3), np.uint8)))
    assert not (z.whole.any() or z.core.any() or z.enhancing.any())

    m = np.zeros((3, 3, 3), np.uint8)
    m[1, 1, 1] = 4
    r = labels_to_regions(LabelMask(m))
    assert r.whole[1, 1, 1] and r.core[1, 1, 1] and r.enhancing[1, 1, 1]

    m[1, 1, 1] = 2
    r = labels_to_regions(LabelMask(m))
    assert r.whole[1, 1, 1] and not r.core[1, 1, 1] and not r.enhancing[1, 1, 1]


def test_regions_to_labels_examples():
    empty = RegionMaskSet(*(np.zeros((2, 2, 2), bool) for _ in range(3)))
    assert not regions_to_labels(empty).data.any()

    bad = RegionMaskSet(np.zeros((2, 2, 2), bool), np.ones((2, 2, 2), bool), np.zeros((2, 2, 2), bool))
    with pytest.raises(NestingViolation):
        regions_to_labels(bad)


def test_nested_spheres_roundtrip_voxelwise():
    grid = np.indices((12, 12, 12)) - 5.5
    r2 = (grid ** 2).sum(0)
    regions = RegionMaskSet(r2 < 30, r2 < 12, r2 < 4)
    labels = regions_to_labels(regions).data
    # voxelwise brute force of the inverse rule
    for idx in np.ndindex(labels.shape):
        w, c, e = regions.whole[idx], regions.core[idx], regions.enhancing[idx]
        expected = 4 if e else 1 if c else 2 if w else 0
        assert labels[idx] == expected
    back = labels_to_regions(LabelMask(labels))
    for name in ("whole", "core", "enhancing"):
        assert np.array_equal(back[name], regions[name])


@settings(max_examples=60, deadline=None)
@given(label_masks)
def test_label_region_roundtrip_property(data):
    mask = LabelMask(data)
    regions = labels_to_regions(mask)
    assert regions.is_nested()
    assert np.array_equal(regions_to_labels(regions).data, data)


def test_phantom_determinism_and_structure():
    a = make_phantom(11, (24, 20, 16))
    b = make_phantom(11, (24, 20, 16))
    assert np.array_equal(a[0].data, b[0].data)
    assert np.array_equal(a[1].data, b[1].data)
    c = make_phantom(12, (24, 20, 16))
    assert not np.array_equal(a[0].data, c[0].data)
    regions = labels_to_regions(a[1])
    assert regions.is_nested()
    assert all(regions[r].any() for r in ("whole", "core", "enhancing"))


def test_phantom_noise_free_is_piecewise_constant():
    vol, mask = make_phantom(5, (24, 24, 24), PhantomNoiseConfig(0.0, 0.0))
    for ch in vol.data:
        # one value per tissue class (background, healthy, three tumor labels)
        assert len(np.unique(ch)) <= 5
        for lab in (1, 2, 4):
            assert len(np.unique(ch[mask.data == lab])) == 1


def test_phantom_shape_validation():
    with pytest.raises(InvalidShape):
        make_phantom(0, (8, 32, 32))

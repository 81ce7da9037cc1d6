"""Volumetric containers, label/region conversion, NIfTI I/O and phantoms.

Arrays follow a channels-first ``(C, D, H, W)`` layout in memory. On disk,
multi-channel NIfTI files keep channels on the fourth axis, which is the
usual layout for 4D NIfTI images.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import nibabel as nib
import numpy as np

from .errors import InvalidLabels, InvalidShape, MalformedFile, NestingViolation, VolumeIOError

MODALITIES = ("t1", "t1c", "t2", "flair")
LABEL_VALUES = (0, 1, 2, 4)
REGIONS = ("whole", "core", "enhancing")


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(s > 0 for s in spacing):
        raise ValueError(f"spacing must be three positive values, got {spacing}")
    return spacing


@dataclass(frozen=True)
class MultiModalVolume:
    """Channels-first stack of co-registered scalar volumes."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    channel_names: tuple[str, ...] = MODALITIES

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 4:
            raise InvalidShape(f"expected (C, D, H, W) data, got shape {data.shape}")
        names = tuple(self.channel_names)
        if data.shape[0] != len(names):
            raise ValueError(
                f"{data.shape[0]} channels but {len(names)} channel names")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume contains non-finite values")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        object.__setattr__(self, "channel_names", names)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    def replace(self, data=None, channel_names=None) -> "MultiModalVolume":
        return MultiModalVolume(
            self.data if data is None else data,
            self.spacing,
            self.channel_names if channel_names is None else channel_names,
        )


@dataclass(frozen=True)
class LabelMask:
    """Voxel labels: 0 background, 1 necrosis, 2 edema, 4 enhancing."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise InvalidShape(f"expected (D, H, W) labels, got shape {data.shape}")
        bad = np.setdiff1d(np.unique(data), LABEL_VALUES)
        if bad.size:
            raise InvalidLabels(f"label values {bad.tolist()} not in {LABEL_VALUES}")
        object.__setattr__(self, "data", data.astype(np.uint8, copy=False))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class RegionSpec:
    """Ordered evaluation regions and the labels each one is made of."""

    regions: tuple[str, ...] = REGIONS
    label_composition: dict = field(default_factory=lambda: {
        "whole": (1, 2, 4),
        "core": (1, 4),
        "enhancing": (4,),
    })

    def __post_init__(self):
        comp = {r: set(self.label_composition[r]) for r in self.regions}
        if not (comp["enhancing"] <= comp["core"] <= comp["whole"]):
            raise ValueError("region label sets must be nested enhancing <= core <= whole")


@dataclass(frozen=True)
class RegionMaskSet:
    whole: np.ndarray
    core: np.ndarray
    enhancing: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, r), dtype=bool) for r in REGIONS]
        if len({a.shape for a in arrays}) != 1:
            raise ValueError("region masks must share one shape")
        for r, a in zip(REGIONS, arrays):
            object.__setattr__(self, r, a)

    def __getitem__(self, region: str) -> np.ndarray:
        return getattr(self, region)

    def is_nested(self) -> bool:
        return bool(np.all(self.core <= self.whole) and np.all(self.enhancing <= self.core))


@dataclass(frozen=True)
class ProbabilityMapSet:
    p_whole: np.ndarray
    p_core: np.ndarray
    p_enh: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float32) for a in (self.p_whole, self.p_core, self.p_enh)]
        if len({a.shape for a in arrays}) != 1:
            raise ValueError("probability maps must share one shape")
        for a in arrays:
            if a.size and (a.min() < 0 or a.max() > 1 or not np.all(np.isfinite(a))):
                raise ValueError("probabilities must lie in [0, 1]")
        for name, a in zip(("p_whole", "p_core", "p_enh"), arrays):
            object.__setattr__(self, name, a)

    def __getitem__(self, region: str) -> np.ndarray:
        return {"whole": self.p_whole, "core": self.p_core, "enhancing": self.p_enh}[region]

    def as_tuple(self):
        return self.p_whole, self.p_core, self.p_enh


@dataclass(frozen=True)
class UncertaintyMapSet:
    u_whole: np.ndarray
    u_core: np.ndarray
    u_enh: np.ndarray

    def __post_init__(self):
        for name in ("u_whole", "u_core", "u_enh"):
            a = np.asarray(getattr(self, name))
            if a.size and (a.min() < 0 or a.max() > 100):
                raise ValueError("uncertainty scores must lie in [0, 100]")
            object.__setattr__(self, name, a)

    def __getitem__(self, region: str) -> np.ndarray:
        return {"whole": self.u_whole, "core": self.u_core, "enhancing": self.u_enh}[region]

    def as_tuple(self):
        return self.u_whole, self.u_core, self.u_enh


# ---------------------------------------------------------------------------
# Label <-> region conversion


def labels_to_regions(mask: LabelMask, spec: RegionSpec | None = None) -> RegionMaskSet:
    spec = spec or RegionSpec()
    data = mask.data if isinstance(mask, LabelMask) else LabelMask(mask).data
    masks = {r: np.isin(data, spec.label_composition[r]) for r in spec.regions}
    return RegionMaskSet(**masks)


def regions_to_labels(regions: RegionMaskSet, spacing=(1.0, 1.0, 1.0)) -> LabelMask:
    """Inverse of :func:`labels_to_regions` for nested region sets."""
    if not regions.is_nested():
        raise NestingViolation("regions are not nested; call enforce_nesting first")
    out = np.zeros(regions.whole.shape, dtype=np.uint8)
    out[regions.whole] = 2
    out[regions.core] = 1
    out[regions.enhancing] = 4
    return LabelMask(out, spacing)


# ---------------------------------------------------------------------------
# NIfTI I/O


def _affine(spacing) -> np.ndarray:
    return np.diag([*spacing, 1.0])


def save_volume(vol, path, spacing=None) -> None:
    """Write a volume, label mask or bare 3D/4D array to NIfTI-1.

    Bare arrays keep their dtype, so an uncertainty map passed as ``uint8``
    is written as unsigned 8-bit. ``spacing`` defaults to the container's
    own spacing, or 1 mm for bare arrays.
    """
    if isinstance(vol, MultiModalVolume):
        data = np.moveaxis(vol.data, 0, -1)
        if data.shape[-1] == 1:
            data = data[..., 0]
        spacing = vol.spacing if spacing is None else spacing
    elif isinstance(vol, LabelMask):
        data = vol.data.astype(np.uint8)
        spacing = vol.spacing if spacing is None else spacing
    else:
        data = np.asarray(vol)
        if data.ndim == 4:
            data = np.moveaxis(data, 0, -1)
        spacing = (1.0, 1.0, 1.0) if spacing is None else spacing
    spacing = _check_spacing(spacing)
    if data.dtype == np.float64:
        data = data.astype(np.float32)
    elif data.dtype == bool:
        data = data.astype(np.uint8)

    img = nib.Nifti1Image(np.ascontiguousarray(data), _affine(spacing))
    img.header.set_data_dtype(data.dtype)
    img.header.set_zooms(tuple(spacing) + ((1.0,) if data.ndim == 4 else ()))
    img.header.set_xyzt_units("mm")
    try:
        nib.save(img, os.fspath(path))
    except OSError as exc:
        raise VolumeIOError(f"cannot write {path}: {exc}") from exc


def _read_nifti(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        img = nib.load(os.fspath(path))
        if not isinstance(img, nib.Nifti1Image):
            raise MalformedFile(f"{path} is not a NIfTI-1 image")
        data = np.asanyarray(img.dataobj)
    except MalformedFile:
        raise
    except Exception as exc:
        raise MalformedFile(f"cannot parse {path}: {exc}") from exc
    spacing = tuple(float(z) for z in img.header.get_zooms()[:3])
    return np.asarray(data), spacing


def load_volume(path, label: bool = False, channel_names=None):
    """Read a NIfTI-1 file as a :class:`MultiModalVolume` or :class:`LabelMask`.

    A 3D image file becomes a single-channel volume ``(1, D, H, W)``.
    With ``label=True`` the file must be 3D and hold only {0, 1, 2, 4}.
    """
    data, spacing = _read_nifti(path)
    if label:
        if data.ndim != 3:
            raise MalformedFile(f"label file {path} is not 3D")
        if not np.issubdtype(data.dtype, np.integer):
            if not np.all(data == np.round(data)):
                raise InvalidLabels(f"{path} holds non-integer labels")
        bad = np.setdiff1d(np.unique(data), LABEL_VALUES)
        if bad.size:
            raise InvalidLabels(f"{path}: label values {bad.tolist()} not in {LABEL_VALUES}")
        return LabelMask(data.astype(np.uint8), spacing)

    if data.ndim == 3:
        data = data[None]
    elif data.ndim == 4:
        data = np.moveaxis(data, -1, 0)
    else:
        raise MalformedFile(f"{path} has unsupported rank {data.ndim}")
    if channel_names is None:
        channel_names = MODALITIES if data.shape[0] == 4 else tuple(
            f"ch{i}" for i in range(data.shape[0]))
    return MultiModalVolume(np.ascontiguousarray(data), spacing, tuple(channel_names))


def load_array(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read raw voxel data and spacing with no label validation."""
    return _read_nifti(path)


# ---------------------------------------------------------------------------
# Synthetic phantoms


@dataclass(frozen=True)
class PhantomNoiseConfig:
    gaussian_std: float = 0.05      # relative to healthy-tissue intensity
    salt_pepper_rate: float = 0.01  # fraction of brain voxels hit by impulses


# Relative intensity of (healthy, necrosis, edema, enhancing) per modality.
_TISSUE_INTENSITY = {
    "t1": (1.0, 0.45, 0.75, 0.9),
    "t1c": (1.0, 0.4, 0.85, 2.2),
    "t2": (1.0, 1.9, 1.6, 1.25),
    "flair": (1.0, 1.2, 2.0, 1.45),
}


def _ellipsoid(grid, center, radii):
    return sum(((g - c) / r) ** 2 for g, c, r in zip(grid, center, radii)) <= 1.0


def make_phantom(seed: int, shape=(32, 32, 32), noise: PhantomNoiseConfig | None = None,
                 spacing=(1.0, 1.0, 1.0)) -> tuple[MultiModalVolume, LabelMask]:
    """Synthetic four-modality brain with a nested ellipsoidal tumor.

    The tumor is an edema ellipsoid containing a core ellipsoid, whose rim
    is enhancing tissue around a necrotic center. Intensities are constant
    per tissue class and modality, with a per-case gain; Gaussian noise and
    salt-and-pepper impulses are added inside the brain only, so the
    background stays exactly zero.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or min(shape) < 16:
        raise InvalidShape(f"phantom shape must be three axes >= 16, got {shape}")
    noise = noise or PhantomNoiseConfig()
    rng = np.random.default_rng(seed)
    dims = np.array(shape, dtype=float)
    grid = np.meshgrid(*(np.arange(n, dtype=float) for n in shape), indexing="ij")

    center = (dims - 1) / 2
    brain = _ellipsoid(grid, center, dims * rng.uniform(0.42, 0.47, 3))

    whole_r = dims * rng.uniform(0.19, 0.24, 3)
    tumor_c = center + rng.uniform(-0.06, 0.06, 3) * dims
    core_r = whole_r * rng.uniform(0.6, 0.7, 3)
    core_c = tumor_c + rng.uniform(-0.1, 0.1, 3) * (whole_r - core_r)
    necro_r = core_r * rng.uniform(0.4, 0.5, 3)

    whole = _ellipsoid(grid, tumor_c, whole_r) & brain
    core = _ellipsoid(grid, core_c, core_r) & whole
    necrosis = _ellipsoid(grid, core_c, necro_r) & core

    labels = np.zeros(shape, dtype=np.uint8)
    labels[whole] = 2
    labels[core] = 4
    labels[necrosis] = 1

    tissue = np.zeros(shape, dtype=np.int64)  # index into _TISSUE_INTENSITY rows
    tissue[labels == 1] = 1
    tissue[labels == 2] = 2
    tissue[labels == 4] = 3

    channels = []
    for name in MODALITIES:
        gain = 100.0 * rng.uniform(0.8, 1.2)
        levels = np.asarray(_TISSUE_INTENSITY[name]) * gain
        img = np.where(brain, levels[tissue], 0.0)
        if noise.gaussian_std > 0:
            img = img + brain * rng.normal(0.0, noise.gaussian_std * gain, shape)
        if noise.salt_pepper_rate > 0:
            hit = brain & (rng.random(shape) < noise.salt_pepper_rate)
            salt = rng.random(shape) < 0.5
            img[hit & salt] = 2.5 * gain
            img[hit & ~salt] = 0.0
        channels.append(img)

    data = np.stack(channels).astype(np.float32)
    return MultiModalVolume(data, spacing, MODALITIES), LabelMask(labels, spacing)

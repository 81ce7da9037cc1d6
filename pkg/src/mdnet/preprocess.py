"""Intensity normalization, grid resizing and the denoised channel stack."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import LabelMask, MultiModalVolume


@dataclass(frozen=True)
class PreprocessConfig:
    target_shape: tuple[int, int, int] = (160, 192, 128)
    median_kernel: tuple[int, int, int] = (3, 3, 3)
    gaussian_kernel: tuple[int, int, int] = (3, 3, 3)
    gaussian_sigma: float = 0.5
    eps_std: float = 1e-8
    normalize_support: str = "nonzero"  # or "all"

    def __post_init__(self):
        for k in (*self.median_kernel, *self.gaussian_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError("kernel sizes must be odd and positive")
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be positive")
        if any(int(t) <= 0 for t in self.target_shape):
            raise ValueError("target_shape must be positive")
        if self.normalize_support not in ("nonzero", "all"):
            raise ValueError("normalize_support must be 'nonzero' or 'all'")


class DegenerateChannelWarning(UserWarning):
    """A channel had (near) zero spread and was mapped to zeros."""


def zscore_normalize(vol: MultiModalVolume, config: PreprocessConfig | None = None) -> MultiModalVolume:
    """Per-channel zero-mean, unit-variance scaling.

    With ``normalize_support="nonzero"`` statistics come from the nonzero
    voxels of each channel and the zero background is left at zero.
    """
    config = config or PreprocessConfig()
    out = np.zeros(vol.data.shape, dtype=np.float32)
    for c, (x, name) in enumerate(zip(vol.data, vol.channel_names)):
        x = x.astype(np.float64)
        support = x != 0 if config.normalize_support == "nonzero" else np.ones(x.shape, bool)
        values = x[support]
        std = values.std() if values.size else 0.0
        if std < config.eps_std:
            warnings.warn(f"channel {name!r} is constant; mapped to zeros",
                          DegenerateChannelWarning, stacklevel=2)
            continue
        out[c][support] = (values - values.mean()) / std
    return vol.replace(data=out)


@dataclass(frozen=True)
class CropPadInfo:
    """Index bookkeeping needed to put a resized array back on its source grid."""

    source_shape: tuple[int, int, int]
    target_shape: tuple[int, int, int]
    crop_start: tuple[int, int, int]  # offset into the source where the kept window starts
    pad_before: tuple[int, int, int]  # zeros inserted before the kept window

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "CropPadInfo":
        return cls(**{k: tuple(int(x) for x in v) for k, v in d.items()})


def crop_pad_info(source_shape, target_shape) -> CropPadInfo:
    crop_start, pad_before = [], []
    for s, t in zip(source_shape, target_shape):
        crop_start.append(max(s - t, 0) // 2)
        pad_before.append(max(t - s, 0) // 2)
    return CropPadInfo(tuple(int(s) for s in source_shape), tuple(int(t) for t in target_shape),
                       tuple(crop_start), tuple(pad_before))


def _crop_pad_array(a: np.ndarray, info: CropPadInfo) -> np.ndarray:
    lead = a.shape[:-3]
    out = np.zeros(lead + info.target_shape, dtype=a.dtype)
    src, dst = [], []
    for s, t, c, p in zip(info.source_shape, info.target_shape, info.crop_start, info.pad_before):
        n = min(s, t)
        src.append(slice(c, c + n))
        dst.append(slice(p, p + n))
    out[(..., *dst)] = a[(..., *src)]
    return out


def crop_or_pad(vol, target_shape):
    """Center-crop or symmetrically zero-pad the last three axes.

    Accepts a :class:`MultiModalVolume`, :class:`LabelMask` or ndarray and
    returns the same kind plus the :class:`CropPadInfo` that
    :func:`restore_shape` needs to re-embed predictions.
    """
    target_shape = tuple(int(t) for t in target_shape)
    if isinstance(vol, MultiModalVolume):
        info = crop_pad_info(vol.shape, target_shape)
        return vol.replace(data=_crop_pad_array(vol.data, info)), info
    if isinstance(vol, LabelMask):
        info = crop_pad_info(vol.shape, target_shape)
        return LabelMask(_crop_pad_array(vol.data, info), vol.spacing), info
    a = np.asarray(vol)
    info = crop_pad_info(a.shape[-3:], target_shape)
    return _crop_pad_array(a, info), info


def restore_shape(a: np.ndarray, info: CropPadInfo, fill=0) -> np.ndarray:
    """Place an array on the target grid back onto the source grid."""
    a = np.asarray(a)
    lead = a.shape[:-3]
    out = np.full(lead + info.source_shape, fill, dtype=a.dtype)
    src, dst = [], []
    for s, t, c, p in zip(info.source_shape, info.target_shape, info.crop_start, info.pad_before):
        n = min(s, t)
        dst.append(slice(c, c + n))
        src.append(slice(p, p + n))
    out[(..., *dst)] = a[(..., *src)]
    return out


def median_denoise(vol, kernel=(3, 3, 3)):
    """Per-channel median over a ``kernel`` neighborhood, edge-replicated borders."""
    if isinstance(vol, MultiModalVolume):
        return vol.replace(data=median_denoise(vol.data, kernel))
    a = np.asarray(vol)
    if a.ndim == 3:
        return ndimage.median_filter(a, size=tuple(kernel), mode="nearest")
    return np.stack([ndimage.median_filter(ch, size=tuple(kernel), mode="nearest") for ch in a])


def gaussian_kernel_1d(size: int = 3, sigma: float = 0.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_denoise(vol, kernel=(3, 3, 3), sigma: float = 0.5):
    """Separable truncated Gaussian smoothing, kernel normalized to sum 1."""
    if isinstance(vol, MultiModalVolume):
        return vol.replace(data=gaussian_denoise(vol.data, kernel, sigma))
    a = np.asarray(vol)
    spatial = a.ndim - 3
    out = a.astype(np.float64)
    for axis, size in enumerate(kernel):
        out = ndimage.correlate1d(out, gaussian_kernel_1d(size, sigma), axis=spatial + axis,
                                  mode="nearest")
    return out.astype(a.dtype if np.issubdtype(a.dtype, np.floating) else np.float32)


def stack_denoised(vol: MultiModalVolume, config: PreprocessConfig | None = None) -> MultiModalVolume:
    """Concatenate raw, median-filtered and Gaussian-smoothed copies as channels.

    Output order is ``[raw..., median..., gaussian...]``.
    """
    config = config or PreprocessConfig()
    raw = vol.data
    med = median_denoise(raw, config.median_kernel)
    gau = gaussian_denoise(raw, config.gaussian_kernel, config.gaussian_sigma)
    names = (tuple(vol.channel_names)
             + tuple(f"{n}_median" for n in vol.channel_names)
             + tuple(f"{n}_gauss" for n in vol.channel_names))
    data = np.concatenate([raw, med.astype(raw.dtype), gau.astype(raw.dtype)], axis=0)
    return vol.replace(data=data, channel_names=names)


def preprocess_case(vol: MultiModalVolume, config: PreprocessConfig | None = None,
                    mask: LabelMask | None = None):
    """Denoise-stack, normalize each of the stacked channels, then resize.

    Returns ``(volume, info)`` or ``(volume, mask, info)`` when a mask is given.
    """
    config = config or PreprocessConfig()
    stacked = zscore_normalize(stack_denoised(vol, config), config)
    out, info = crop_or_pad(stacked, config.target_shape)
    if mask is None:
        return out, info
    cropped, _ = crop_or_pad(mask, config.target_shape)
    return out, cropped, info

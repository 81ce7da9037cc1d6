"""On-the-fly geometric augmentation applied jointly to image and label mask.

Images are ``(C, D, H, W)`` float arrays, masks ``(D, H, W)`` integer arrays.
Images are resampled trilinearly and masks by nearest neighbor, so mask
values never leave the original label set. Every function draws from an
explicit ``numpy.random.Generator``; there is no global RNG state.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .preprocess import gaussian_kernel_1d


@dataclass(frozen=True)
class AugmentConfig:
    rotate_range_deg: tuple[float, float] = (-1.0, 1.0)
    flip_prob: float = 0.5
    elastic_prob: float = 0.3
    elastic_alpha: float = 1.0
    elastic_sigma: float = 0.25
    scale_range: tuple[float, float] = (0.9, 1.1)
    scale_prob: float = 0.3
    crop_resize_prob: float = 0.3
    crop_min_extent: float = 0.8
    seed: int = 0

    def __post_init__(self):
        for p in (self.flip_prob, self.elastic_prob, self.scale_prob, self.crop_resize_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if min(self.scale_range) <= 0:
            raise ValueError("scale_range must be positive")
        if self.elastic_alpha < 0 or self.elastic_sigma < 0:
            raise ValueError("elastic_alpha and elastic_sigma must be non-negative")
        if not 0.0 < self.crop_min_extent <= 1.0:
            raise ValueError("crop_min_extent must lie in (0, 1]")


def sample_rng(seed: int, sample_index: int) -> np.random.Generator:
    """Per-sample generator; identical for a given pair regardless of scheduling."""
    return np.random.default_rng([int(seed), int(sample_index)])


def random_flip(image, mask, rng, prob=0.5):
    """Reverse each spatial axis independently with probability ``prob``."""
    flips = rng.random(3) < prob
    for axis in np.flatnonzero(flips):
        image = np.flip(image, axis=axis + 1)
        mask = np.flip(mask, axis=axis)
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)


def rotation_matrix(angles_deg) -> np.ndarray:
    """Composite rotation about array axes 0, 1 and 2 (applied in that order)."""
    a, b, c = np.deg2rad(angles_deg)
    r0 = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    r1 = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    r2 = np.array([[math.cos(c), -math.sin(c), 0], [math.sin(c), math.cos(c), 0], [0, 0, 1]])
    return r2 @ r1 @ r0


def apply_affine(image, mask, matrix):
    """Transform content by ``matrix`` about the grid center, keeping the grid.

    ``matrix`` maps source positions to output positions; sampling uses
    its inverse.
    """
    matrix = np.asarray(matrix, dtype=float)
    if np.allclose(matrix, np.eye(3), rtol=0, atol=0):
        return image, mask
    inv = np.linalg.inv(matrix)
    center = (np.asarray(mask.shape, dtype=float) - 1) / 2
    offset = center - inv @ center
    image = np.stack([
        ndimage.affine_transform(ch, inv, offset=offset, order=1, mode="nearest")
        for ch in image
    ]).astype(image.dtype, copy=False)
    mask = ndimage.affine_transform(mask, inv, offset=offset, order=0, mode="nearest")
    return image, mask


def random_affine(image, mask, rng, rotate_range_deg=(-1.0, 1.0), scale_range=(0.9, 1.1),
                  scale_prob=0.3):
    """Small rotation about all three axes plus an occasional isotropic scaling.

    Rotation is always drawn; scaling happens with probability ``scale_prob``.
    """
    angles = rng.uniform(rotate_range_deg[0], rotate_range_deg[1], 3)
    scale = rng.uniform(*scale_range) if rng.random() < scale_prob else 1.0
    return apply_affine(image, mask, scale * rotation_matrix(angles))


def random_displacement_field(shape, rng, sigma=0.25, kernel_size=3) -> np.ndarray:
    """Per-voxel, per-axis ``U(-1, 1)`` displacements smoothed by a truncated Gaussian."""
    field = rng.uniform(-1.0, 1.0, (3, *shape))
    if sigma > 0:
        w = gaussian_kernel_1d(kernel_size, sigma)
        for axis in range(1, 4):
            field = ndimage.correlate1d(field, w, axis=axis, mode="nearest")
    return field


def warp(image, mask, displacement, alpha=1.0):
    """Move each voxel from ``r`` to ``r + alpha * displacement``.

    Implemented as backward sampling at ``r - alpha * displacement(r)``.
    """
    shape = mask.shape
    grid = np.meshgrid(*(np.arange(n, dtype=float) for n in shape), indexing="ij")
    coords = np.stack(grid) - alpha * np.asarray(displacement, dtype=float)
    image = np.stack([
        ndimage.map_coordinates(ch, coords, order=1, mode="nearest") for ch in image
    ]).astype(image.dtype, copy=False)
    mask = ndimage.map_coordinates(mask, coords, order=0, mode="nearest")
    return image, mask


def elastic_transform(image, mask, rng, prob=0.3, alpha=1.0, sigma=0.25):
    if rng.random() >= prob:
        return image, mask
    return warp(image, mask, random_displacement_field(mask.shape, rng, sigma), alpha)


def crop_and_resize(image, mask, start, extent):
    """Crop the box ``[start, start + extent)`` and stretch it back to the full grid."""
    shape = mask.shape
    if tuple(extent) == tuple(shape):
        return image, mask
    axes = []
    for n, s, e in zip(shape, start, extent):
        step = (e - 1) / (n - 1) if n > 1 else 0.0
        axes.append(s + step * np.arange(n))
    coords = np.stack(np.meshgrid(*axes, indexing="ij"))
    image = np.stack([
        ndimage.map_coordinates(ch, coords, order=1, mode="nearest") for ch in image
    ]).astype(image.dtype, copy=False)
    mask = ndimage.map_coordinates(mask, coords, order=0, mode="nearest")
    return image, mask


def random_crop_resize(image, mask, rng, prob=0.3, min_extent=0.8):
    if rng.random() >= prob:
        return image, mask
    extent, start = [], []
    for n in mask.shape:
        e = int(rng.integers(math.ceil(min_extent * n), n + 1))
        extent.append(e)
        start.append(int(rng.integers(0, n - e + 1)))
    return crop_and_resize(image, mask, start, extent)


def augment_pipeline(image, mask, config: AugmentConfig, sample_index: int):
    """Rotate, flip, elastic warp, scale, crop-resize, in that order.

    The random stream is derived from ``(config.seed, sample_index)``.
    """
    rng = sample_rng(config.seed, sample_index)
    image = np.asarray(image)
    mask = np.asarray(mask)
    image, mask = random_affine(image, mask, rng, config.rotate_range_deg, scale_prob=0.0)
    image, mask = random_flip(image, mask, rng, config.flip_prob)
    image, mask = elastic_transform(image, mask, rng, config.elastic_prob,
                                    config.elastic_alpha, config.elastic_sigma)
    image, mask = random_affine(image, mask, rng, (0.0, 0.0), config.scale_range,
                                config.scale_prob)
    image, mask = random_crop_resize(image, mask, rng, config.crop_resize_prob,
                                     config.crop_min_extent)
    return image, mask


def augment_dataset(samples, config: AugmentConfig, start_index: int = 0, workers: int = 1):
    """Augment ``(image, mask)`` pairs; sample ``i`` uses index ``start_index + i``."""
    def one(item):
        i, (image, mask) = item
        return augment_pipeline(image, mask, config, start_index + i)

    items = list(enumerate(samples))
    if workers <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))

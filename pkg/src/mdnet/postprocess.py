"""Thresholding, region nesting and small-enhancing-component relabeling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import LabelMask, ProbabilityMapSet, RegionMaskSet, regions_to_labels

_CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


@dataclass(frozen=True)
class PostprocessConfig:
    prob_threshold: float = 0.5
    min_enh_voxels: int = 500
    connectivity: int = 26

    def __post_init__(self):
        if not 0 < self.prob_threshold < 1:
            raise ValueError("prob_threshold must lie in (0, 1)")
        if self.min_enh_voxels < 0:
            raise ValueError("min_enh_voxels must be non-negative")
        if self.connectivity not in _CONNECTIVITY_RANK:
            raise ValueError("connectivity must be 6, 18 or 26")


def enforce_nesting(regions: RegionMaskSet) -> RegionMaskSet:
    core = regions.core & regions.whole
    return RegionMaskSet(regions.whole, core, regions.enhancing & core)


def threshold_probs(probs: ProbabilityMapSet, config: PostprocessConfig | None = None) -> RegionMaskSet:
    """Voxel belongs to a region iff its probability is >= the threshold."""
    t = (config or PostprocessConfig()).prob_threshold
    return enforce_nesting(RegionMaskSet(*(p >= t for p in probs.as_tuple())))


def connected_components(binary, connectivity: int = 26):
    """Label connected foreground components.

    Returns ``(labels, sizes)`` where ``sizes[i]`` is the voxel count of
    component ``i + 1``.
    """
    structure = ndimage.generate_binary_structure(3, _CONNECTIVITY_RANK[connectivity])
    labels, n = ndimage.label(np.asarray(binary, dtype=bool), structure=structure)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return labels, sizes


def relabel_small_enhancing(mask: LabelMask, config: PostprocessConfig | None = None) -> LabelMask:
    """Turn enhancing components smaller than ``min_enh_voxels`` into necrosis."""
    config = config or PostprocessConfig()
    data = mask.data.copy()
    labels, sizes = connected_components(data == 4, config.connectivity)
    small = np.flatnonzero(sizes < config.min_enh_voxels) + 1
    if small.size:
        data[np.isin(labels, small)] = 1
    return LabelMask(data, mask.spacing)


def postprocess_probs(probs: ProbabilityMapSet, config: PostprocessConfig | None = None,
                      spacing=(1.0, 1.0, 1.0)) -> LabelMask:
    """Threshold, nest, convert to labels, then relabel small enhancing blobs."""
    config = config or PostprocessConfig()
    labels = regions_to_labels(threshold_probs(probs, config), spacing)
    return relabel_small_enhancing(labels, config)

"""Multi-decoder 3D tumor segmentation with denoised input channels."""

from .volume import (LabelMask, MultiModalVolume, ProbabilityMapSet, RegionMaskSet, RegionSpec,
                     UncertaintyMapSet, labels_to_regions, load_volume, make_phantom,
                     regions_to_labels, save_volume)

__all__ = [
    "LabelMask", "MultiModalVolume", "ProbabilityMapSet", "RegionMaskSet", "RegionSpec",
    "UncertaintyMapSet", "labels_to_regions", "load_volume", "make_phantom",
    "regions_to_labels", "save_volume",
]
__version__ = "0.1.0"

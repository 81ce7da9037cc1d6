"""Ensemble averaging and voxelwise uncertainty scores."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import EmptyEnsemble, OutOfRangeProbability, ShapeMismatch
from .volume import ProbabilityMapSet, UncertaintyMapSet, save_volume

UNCERTAINTY_SUFFIXES = {"whole": "_unc_whole", "core": "_unc_core", "enhancing": "_unc_enhance"}


def ensemble_mean(maps) -> ProbabilityMapSet:
    maps = list(maps)
    if not maps:
        raise EmptyEnsemble("no ensemble members")
    shape = maps[0].p_whole.shape
    if any(m.p_whole.shape != shape for m in maps):
        raise ShapeMismatch("ensemble members disagree on shape")
    mean = [np.mean([m.as_tuple()[r].astype(np.float64) for m in maps], axis=0) for r in range(3)]
    return ProbabilityMapSet(*(np.clip(m, 0, 1) for m in mean))


def uncertainty_score(p):
    """``200 (1 - p)`` for ``p >= 0.5`` and ``200 p`` below; 100 means maximally unsure."""
    p = np.asarray(p, dtype=np.float64)
    if p.size and (np.nanmin(p) < 0 or np.nanmax(p) > 1 or np.isnan(p).any()):
        raise OutOfRangeProbability("probabilities must lie in [0, 1]")
    return np.where(p >= 0.5, 200.0 * (1.0 - p), 200.0 * p)


def uncertainty_from_prob(probs: ProbabilityMapSet) -> UncertaintyMapSet:
    """Integer uncertainty maps (rounded half up) for each region."""
    return UncertaintyMapSet(*(
        np.floor(uncertainty_score(p) + 0.5).astype(np.uint8) for p in probs.as_tuple()))


def save_uncertainty_maps(unc: UncertaintyMapSet, case: str, out_dir, spacing=(1.0, 1.0, 1.0)):
    """Write ``{case}_unc_whole/_unc_core/_unc_enhance.nii.gz`` as uint8; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for region, suffix in UNCERTAINTY_SUFFIXES.items():
        path = out_dir / f"{case}{suffix}.nii.gz"
        save_volume(unc[region].astype(np.uint8), path, spacing)
        paths.append(path)
    return paths

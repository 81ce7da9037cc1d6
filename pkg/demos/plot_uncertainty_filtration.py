"""
Uncertainty maps and filtration curves
======================================

Uncertainty is 0 for confident voxels and 100 at p = 0.5. Filtering out
voxels above a threshold and re-scoring shows whether the uncertain voxels
are the wrong ones.
"""

import matplotlib.pyplot as plt
import numpy as np
from scipy import ndimage

from mdnet.metrics import dauc_rftp_rftn, dsc, filtration_curve
from mdnet.postprocess import threshold_probs
from mdnet.uncertainty import ensemble_mean, uncertainty_from_prob
from mdnet.volume import ProbabilityMapSet, labels_to_regions, make_phantom

_, mask = make_phantom(seed=3, shape=(40, 40, 40))
truth = labels_to_regions(mask)

# fake ensemble members: blurred truth plus member-specific noise, so the
# members disagree near region borders
rng = np.random.default_rng(0)
members = []
for _ in range(5):
    maps = [np.clip(ndimage.gaussian_filter(truth[r].astype(float), 1.5)
                    + rng.normal(0, 0.1, truth[r].shape), 0, 1).astype(np.float32)
            for r in ("whole", "core", "enhancing")]
    members.append(ProbabilityMapSet(*maps))
probs = ensemble_mean(members)
unc = uncertainty_from_prob(probs)
pred = threshold_probs(probs)

curve = filtration_curve(pred.whole, truth.whole, unc.u_whole)
print("unfiltered DSC", round(dsc(pred.whole, truth.whole), 4))
print("DAUC / RFTP / RFTN", [round(v, 2) for v in dauc_rftp_rftn(curve)])

plt.plot(curve.thresholds, curve.dice_at_tau, label="Dice")
plt.plot(curve.thresholds, curve.ftp_ratio_at_tau, label="filtered TP")
plt.plot(curve.thresholds, curve.ftn_ratio_at_tau, label="filtered TN")
plt.xlabel("uncertainty threshold")
plt.legend()
plt.show()

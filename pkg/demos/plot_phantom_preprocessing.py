"""
Synthetic phantoms and the denoised input stack
===============================================

A phantom is a four-modality brain volume with a nested tumor. The network
sees twelve channels: the raw modalities followed by a median-filtered and
a Gaussian-filtered copy of each.
"""

import matplotlib.pyplot as plt
import numpy as np

from mdnet.preprocess import PreprocessConfig, preprocess_case
from mdnet.volume import labels_to_regions, make_phantom

vol, mask = make_phantom(seed=0, shape=(48, 48, 40))
print("modalities", vol.channel_names, vol.data.shape)
values, counts = np.unique(mask.data, return_counts=True)
print("label counts", dict(zip(values.tolist(), counts.tolist())))

# regions are nested: enhancing inside core inside whole
regions = labels_to_regions(mask)
print({r: int(regions[r].sum()) for r in ("whole", "core", "enhancing")})

image, seg, info = preprocess_case(vol, PreprocessConfig(target_shape=(48, 48, 32)), mask)
print("network input", image.data.shape, "crop start", info.crop_start)

z = image.shape[2] // 2
fig, axes = plt.subplots(1, 4, figsize=(12, 3))
for ax, c, title in zip(axes, (3, 7, 11), ("FLAIR", "FLAIR median", "FLAIR gauss")):
    ax.imshow(image.data[c, :, :, z], cmap="gray")
    ax.set_title(title)
axes[3].imshow(seg.data[:, :, z], cmap="viridis")
axes[3].set_title("labels")
for ax in axes:
    ax.axis("off")
plt.show()

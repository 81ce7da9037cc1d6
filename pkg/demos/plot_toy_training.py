"""
Overfitting two phantoms with the toy preset
============================================

Same topology, 32^3 grid, larger step size. Each epoch is two optimizer
steps. Expect roughly a second per step on one CPU core.
"""

import matplotlib.pyplot as plt
import numpy as np

from mdnet.config import toy_config
from mdnet.metrics import dsc
from mdnet.model import build_model, predict_probs
from mdnet.postprocess import threshold_probs
from mdnet.preprocess import preprocess_case
from mdnet.train import TrainConfig, train_model
from mdnet.volume import REGIONS, labels_to_regions, make_phantom

cfg = toy_config()
data = []
for i in range(2):
    vol, mask = make_phantom([0, i], (32, 32, 32))
    image, seg, _ = preprocess_case(vol, cfg.preprocess, mask)
    data.append((image.data, seg))

# a shorter run than the 100-epoch preset keeps the demo under a minute
train_cfg = TrainConfig(**{**cfg.train.__dict__, "n_epochs": 20})
result = train_model(data, build_model(cfg.model, seed=0), train_cfg, cfg.loss)

for image, seg in data:
    pred = threshold_probs(predict_probs(result.model, image))
    truth = labels_to_regions(seg)
    print({r: round(dsc(pred[r], truth[r]), 3) for r in REGIONS})

epochs = [h["epoch"] for h in result.history]
fig, ax = plt.subplots(1, 2, figsize=(10, 3.5))
ax[0].plot(epochs, [h["loss"] for h in result.history])
ax[0].set_ylabel("loss")
ax[1].plot(epochs, np.array([h["lr"] for h in result.history]))
ax[1].set_ylabel("learning rate")
for a in ax:
    a.set_xlabel("epoch")
plt.show()

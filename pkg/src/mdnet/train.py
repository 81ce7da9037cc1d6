"""Training loop, learning-rate schedule, cross-validation and ensembles."""

from __future__ import annotations

import copy
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentConfig, augment_pipeline
from .errors import DivergedLoss, EpochOutOfRange, TooFewCases
from .losses import LossConfig, total_loss
from .metrics import MetricsConfig, evaluate_case
from .model import MDNet, ModelConfig, build_model, conv_kernels, predict_probs, save_checkpoint
from .postprocess import PostprocessConfig, postprocess_probs
from .uncertainty import ensemble_mean
from .volume import REGIONS, LabelMask, labels_to_regions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    alpha0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    n_epochs: int = 200
    l2_lambda: float = 1e-5
    batch_size: int = 1
    n_folds: int = 5
    n_ensemble: int = 7
    seed: int = 0
    max_steps: int | None = None  # stop early after this many optimizer steps
    augment: bool = True

    def __post_init__(self):
        if self.alpha0 <= 0 or self.n_epochs <= 0 or self.l2_lambda < 0:
            raise ValueError("alpha0 and n_epochs must be positive, l2_lambda non-negative")
        if self.batch_size != 1:
            raise ValueError("only batch_size=1 is supported")


def lr_schedule(epoch: int, n_epochs: int = 200, alpha0: float = 1e-4) -> float:
    """Cubic polynomial decay ``alpha0 * (1 - e / Ne)^3``."""
    if not 0 <= epoch <= n_epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {n_epochs}]")
    return alpha0 * (1.0 - epoch / n_epochs) ** 3


def l2_penalty(model: MDNet) -> torch.Tensor:
    return sum((w ** 2).sum() for w in conv_kernels(model))


def _targets(mask, dtype):
    regions = labels_to_regions(mask if isinstance(mask, LabelMask) else LabelMask(mask))
    return [torch.as_tensor(regions[r][None, None], dtype=dtype) for r in REGIONS]


@dataclass
class TrainResult:
    model: MDNet
    history: list[dict] = field(default_factory=list)
    seed: int = 0


def train_model(data, model: MDNet, config: TrainConfig | None = None,
                loss_config: LossConfig | None = None,
                augment_config: AugmentConfig | None = None,
                checkpoint_path=None) -> TrainResult:
    """Adam with per-epoch cubic learning-rate decay and L2 on conv kernels.

    ``data`` is a sequence of ``(image, mask)`` with images ``(C, D, H, W)``.
    Each epoch visits every case once in a seeded random order. If the loss
    turns non-finite, the last finite parameters are restored (and written
    to ``checkpoint_path`` when given) before :class:`DivergedLoss` is raised.
    """
    config = config or TrainConfig()
    loss_config = loss_config or LossConfig()
    if not data:
        raise ValueError("no training data")
    if config.augment and augment_config is None:
        augment_config = AugmentConfig(seed=config.seed)
    if not config.augment:
        augment_config = None

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    dtype = next(model.parameters()).dtype
    opt = torch.optim.Adam(model.parameters(), lr=config.alpha0,
                           betas=(config.beta1, config.beta2))
    history = []
    step = 0
    last_good = copy.deepcopy(model.state_dict())
    n = len(data)

    for epoch in range(config.n_epochs):
        lr = lr_schedule(epoch, config.n_epochs, config.alpha0)
        for group in opt.param_groups:
            group["lr"] = lr
        model.train()
        losses, dice = [], {r: [] for r in REGIONS}
        for i in rng.permutation(n):
            image, mask = data[i]
            mask = mask.data if isinstance(mask, LabelMask) else np.asarray(mask)
            if augment_config is not None:
                image, mask = augment_pipeline(image, mask, augment_config, epoch * n + int(i))
            x = torch.as_tensor(np.ascontiguousarray(image), dtype=dtype)[None]
            targets = _targets(mask, dtype)

            opt.zero_grad()
            preds = model(x)
            seg_loss = total_loss(preds, targets, loss_config)
            objective = seg_loss + config.l2_lambda * l2_penalty(model) \
                if config.l2_lambda else seg_loss
            if not torch.isfinite(objective):
                model.load_state_dict(last_good)
                if checkpoint_path is not None:
                    save_checkpoint(model, checkpoint_path, seed=config.seed, epoch=epoch,
                                    diverged=True)
                raise DivergedLoss(f"non-finite loss at epoch {epoch}, step {step}",
                                   checkpoint_path)
            objective.backward()
            opt.step()
            last_good = copy.deepcopy(model.state_dict())
            step += 1

            losses.append(float(seg_loss.detach()))
            with torch.no_grad():
                for r, p, t in zip(REGIONS, preds, targets):
                    hard = p >= 0.5
                    t = t.bool()
                    denom = int(hard.sum() + t.sum())
                    dice[r].append(1.0 if denom == 0 else 2.0 * int((hard & t).sum()) / denom)
            if config.max_steps is not None and step >= config.max_steps:
                break

        history.append({"epoch": epoch, "lr": lr, "loss": float(np.mean(losses)),
                        **{f"dice_{r}": float(np.mean(v)) for r, v in dice.items()}})
        log.debug("epoch %d lr %.3g loss %.5f", epoch, lr, history[-1]["loss"])
        if config.max_steps is not None and step >= config.max_steps:
            break

    model.eval()
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, seed=config.seed, epochs=len(history))
    return TrainResult(model, history, config.seed)


def write_history_csv(history: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["epoch", "lr", "loss"] + [f"dice_{r}" for r in REGIONS]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(history)


def kfold_split(n_cases: int, k: int = 5, seed: int = 0):
    """Seeded partition of ``range(n_cases)`` into ``k`` validation folds."""
    if n_cases < k:
        raise TooFewCases(f"{n_cases} cases cannot form {k} folds")
    perm = np.random.default_rng(seed).permutation(n_cases)
    folds = np.array_split(perm, k)
    all_idx = np.arange(n_cases)
    return [(np.setdiff1d(all_idx, np.sort(f)), np.sort(f)) for f in folds]


def train_ensemble(data, model_config: ModelConfig | None = None,
                   config: TrainConfig | None = None, out_dir=None, **kwargs) -> list[TrainResult]:
    """Train ``n_ensemble`` models that differ only in seed (``seed + i``).

    With ``out_dir`` each member is saved as ``model_seed{seed}.pt`` next to
    its ``history_seed{seed}.csv``.
    """
    config = config or TrainConfig()
    members = []
    for i in range(config.n_ensemble):
        seed = config.seed + i
        member_cfg = TrainConfig(**{**config.__dict__, "seed": seed})
        ckpt = None if out_dir is None else Path(out_dir) / f"model_seed{seed}.pt"
        model = build_model(model_config, seed=seed)
        result = train_model(data, model, member_cfg, checkpoint_path=ckpt, **kwargs)
        if out_dir is not None:
            write_history_csv(result.history, Path(out_dir) / f"history_seed{seed}.csv")
        members.append(result)
    return members


def ensemble_predict(models, image):
    """Voxelwise mean of the members' probability maps."""
    return ensemble_mean(predict_probs(m, image) for m in models)


def cross_validate(data, names=None, model_config: ModelConfig | None = None,
                   config: TrainConfig | None = None,
                   postprocess_config: PostprocessConfig | None = None,
                   metrics_config: MetricsConfig | None = None, **kwargs) -> list[dict]:
    """Train one model per fold and score its validation cases.

    Returns metric rows (see :func:`mdnet.metrics.evaluate_case`) with an
    extra ``fold`` key.
    """
    config = config or TrainConfig()
    names = names or [f"case_{i:04d}" for i in range(len(data))]
    rows = []
    for fold, (train_idx, val_idx) in enumerate(kfold_split(len(data), config.n_folds, config.seed)):
        model = build_model(model_config, seed=config.seed)
        train_model([data[i] for i in train_idx], model, config, **kwargs)
        for i in val_idx:
            image, mask = data[i]
            truth = mask if isinstance(mask, LabelMask) else LabelMask(mask)
            pred = postprocess_probs(predict_probs(model, image), postprocess_config, truth.spacing)
            for row in evaluate_case(names[i], pred, truth, None, metrics_config):
                rows.append({"fold": fold, **row})
    return rows

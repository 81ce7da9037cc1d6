"""Multi-decoder 3D segmentation network with squeeze-and-excitation blocks.

A shared encoder feeds three decoder paths for the whole (W), core (C) and
enhancing (E) tumor regions. Each C level starts from the last W features
of that level, and each E level from the last C features, so information
only flows W -> C -> E.

Blocks are stored in one ``ModuleDict`` keyed by their table names
(``EncBlk-0``, ``W-DecSae-2``, ``E-Output``, ...), so parameter names in a
checkpoint read like ``blocks.C-DecBlk-1.0.conv.weight``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import IndivisibleShape, InvalidReduction, ShapeMismatch
from .volume import ProbabilityMapSet

PATHS = ("W", "C", "E")


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 12
    base_filters: int = 12
    levels: int = 4
    leaky_slope: float = 0.01
    se_reduction: int = 4
    se_min_width: int = 4
    conv_kernel: int = 3
    input_shape: tuple[int, int, int] = (160, 192, 128)
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    # "own": each path upsamples its own previous block before joining the
    # encoder skip. "shared": C and E reuse the W concat tensor verbatim,
    # which leaves C/E blocks above level 0 without a route to any output.
    decoder_skip: str = "own"
    # Top E concat joins C-DecCat instead of the skip stack (240 channels at
    # full size instead of 192).
    e_path_wide: bool = False

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("need at least two levels")
        if self.conv_kernel % 2 == 0:
            raise ValueError("conv_kernel must be odd for same padding")
        if self.decoder_skip not in ("own", "shared"):
            raise ValueError("decoder_skip must be 'own' or 'shared'")

    def filters(self, level: int) -> int:
        return self.base_filters * 2 ** level

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        """Same topology at a desk-scale 32^3 grid."""
        return cls(**{"input_shape": (32, 32, 32), **overrides})


class SEBlock(nn.Module):
    """Channel gating: global average pool, FC, ReLU, FC, sigmoid, rescale."""

    def __init__(self, channels: int, reduction: int = 4, min_width: int = 4):
        super().__init__()
        if channels < 1 or reduction < 1:
            raise InvalidReduction(f"bad SE setup: channels={channels}, reduction={reduction}")
        width = max(channels // reduction, min_width)
        if width < 1:
            raise InvalidReduction(f"SE bottleneck width {width} < 1 for {channels} channels")
        self.fc1 = nn.Linear(channels, width)
        self.fc2 = nn.Linear(width, channels)
        # the pooled descriptor is mostly positive after LeakyReLU, so with a
        # zero-centered bias all bottleneck units can start (and stay) dead
        nn.init.constant_(self.fc1.bias, 1.0)

    def forward(self, x):
        s = x.mean(dim=(2, 3, 4))
        s = torch.sigmoid(self.fc2(F.relu(self.fc1(s))))
        return x * s[:, :, None, None, None]


class ConvUnit(nn.Module):
    """Conv3, batch norm, LeakyReLU, SE."""

    def __init__(self, cin: int, cout: int, cfg: ModelConfig):
        super().__init__()
        self.conv = nn.Conv3d(cin, cout, cfg.conv_kernel, padding=cfg.conv_kernel // 2)
        self.bn = nn.BatchNorm3d(cout, eps=cfg.bn_eps, momentum=cfg.bn_momentum)
        self.act = nn.LeakyReLU(cfg.leaky_slope)
        self.se = SEBlock(cout, cfg.se_reduction, cfg.se_min_width)

    def forward(self, x):
        return self.se(self.act(self.bn(self.conv(x))))


def conv_block(cin: int, cout: int, cfg: ModelConfig, repeat: int = 2) -> nn.Sequential:
    return nn.Sequential(*[ConvUnit(cin if i == 0 else cout, cout, cfg) for i in range(repeat)])


def _upsample(x):
    return F.interpolate(x, scale_factor=2, mode="trilinear", align_corners=False)


def _cat(*xs):
    shapes = {tuple(x.shape[2:]) for x in xs}
    if len(shapes) != 1:
        raise ShapeMismatch(f"cannot concatenate feature maps with spatial shapes {shapes}")
    return torch.cat(xs, dim=1)


class MDNet(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = cfg = config or ModelConfig()
        top = cfg.levels - 1
        blocks = {}
        cin = cfg.in_channels
        for lvl in range(cfg.levels):
            blocks[f"EncBlk-{lvl}"] = conv_block(cin, cfg.filters(lvl), cfg)
            cin = cfg.filters(lvl)

        for lvl in range(top - 1, -1, -1):
            f, f_up = cfg.filters(lvl), cfg.filters(lvl + 1)
            skip_ch = f_up + f
            cat_ch = {"W": skip_ch, "C": f + skip_ch, "E": f + skip_ch}
            if cfg.e_path_wide and lvl == top - 1:
                cat_ch["E"] = f + cat_ch["C"]
            for p in PATHS:
                blocks[f"{p}-DecSae-{lvl}"] = SEBlock(cat_ch[p], cfg.se_reduction, cfg.se_min_width)
                blocks[f"{p}-DecBlk-{lvl}"] = conv_block(cat_ch[p], f, cfg)
        for p in PATHS:
            blocks[f"{p}-Output"] = nn.Conv3d(cfg.filters(0), 1, 1)
        self.blocks = nn.ModuleDict(blocks)

    def check_input_shape(self, spatial):
        div = 2 ** (self.config.levels - 1)
        if any(int(s) % div for s in spatial):
            raise IndivisibleShape(f"spatial shape {tuple(spatial)} not divisible by {div}")

    def forward(self, x, trace: dict | None = None):
        """Return ``(p_whole, p_core, p_enh)``, each ``(N, 1, D, H, W)`` in (0, 1).

        If ``trace`` is a dict it is filled with the per-sample output shape of
        every named block.
        """
        cfg = self.config
        self.check_input_shape(x.shape[2:])
        b = self.blocks

        def rec(name, t):
            if trace is not None:
                trace[name] = tuple(t.shape[1:])
            return t

        rec("Input", x)
        enc = []
        h = x
        for lvl in range(cfg.levels):
            if lvl > 0:
                h = rec(f"EncDwn-{lvl}", F.max_pool3d(h, 2))
            h = rec(f"EncBlk-{lvl}", b[f"EncBlk-{lvl}"](h))
            enc.append(h)

        top = cfg.levels - 1
        prev = {p: enc[top] for p in PATHS}
        for lvl in range(top - 1, -1, -1):
            cat = {}
            out = {}
            # W: upsampled deeper features + encoder skip
            w_cat = _cat(_upsample(prev["W"]), enc[lvl])
            cat["W"] = w_cat
            out["W"] = self._decode("W", lvl, w_cat, rec)
            # C: end of W at this level + a skip stack
            c_skip = w_cat if (cfg.decoder_skip == "shared" or lvl == top - 1) else \
                _cat(_upsample(prev["C"]), enc[lvl])
            cat["C"] = _cat(out["W"], c_skip)
            out["C"] = self._decode("C", lvl, cat["C"], rec)
            # E: end of C at this level + a skip stack
            if cfg.e_path_wide and lvl == top - 1:
                e_cat = _cat(out["C"], cat["C"])
            else:
                e_skip = w_cat if (cfg.decoder_skip == "shared" or lvl == top - 1) else \
                    _cat(_upsample(prev["E"]), enc[lvl])
                e_cat = _cat(out["C"], e_skip)
            out["E"] = self._decode("E", lvl, e_cat, rec)
            prev = out

        return tuple(
            rec(f"{p}-Output", torch.sigmoid(b[f"{p}-Output"](prev[p]))) for p in PATHS)

    def _decode(self, path, lvl, cat, rec):
        rec(f"{path}-DecCat-{lvl}", cat)
        h = rec(f"{path}-DecSae-{lvl}", self.blocks[f"{path}-DecSae-{lvl}"](cat))
        return rec(f"{path}-DecBlk-{lvl}", self.blocks[f"{path}-DecBlk-{lvl}"](h))


def build_model(config: ModelConfig | None = None, seed: int | None = None) -> MDNet:
    if seed is not None:
        torch.manual_seed(seed)
    return MDNet(config)


def trace_shapes(config: ModelConfig | None = None, input_shape=None) -> dict:
    """Per-block output shapes for one sample, computed without real arithmetic.

    The network is instantiated on torch's ``meta`` device, so even the
    full 12 x 160 x 192 x 128 input costs no memory or compute.
    """
    config = config or ModelConfig()
    spatial = tuple(input_shape or config.input_shape)
    with torch.device("meta"):
        model = MDNet(config)
        x = torch.empty(1, config.in_channels, *spatial)
    model.eval()
    trace = {}
    with torch.no_grad():
        model(x, trace=trace)
    return trace


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def parameter_groups(model: MDNet) -> dict[str, list[tuple[str, nn.Parameter]]]:
    """Named parameters split into ``encoder``, ``W``, ``C`` and ``E``."""
    groups = {"encoder": [], "W": [], "C": [], "E": []}
    for name, p in model.named_parameters():
        block = name.split(".")[1]
        key = "encoder" if block.startswith("Enc") else block.split("-")[0]
        groups[key].append((name, p))
    return groups


def conv_kernels(model: nn.Module) -> list[torch.Tensor]:
    """Kernel weights of every convolution (the L2-regularized tensors)."""
    return [m.weight for m in model.modules() if isinstance(m, nn.Conv3d)]


@torch.no_grad()
def predict_probs(model: MDNet, image: np.ndarray) -> ProbabilityMapSet:
    """Run one ``(C, D, H, W)`` image through the network in inference mode."""
    model.eval()
    param = next(model.parameters())
    x = torch.as_tensor(np.asarray(image), dtype=param.dtype, device=param.device)[None]
    w, c, e = model(x)
    return ProbabilityMapSet(*(t[0, 0].float().cpu().numpy() for t in (w, c, e)))


def save_checkpoint(model: MDNet, path, **meta) -> None:
    """Single-file archive holding the config (as JSON), parameters and metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "config": json.dumps(asdict(model.config)),
        "state_dict": model.state_dict(),
        "meta": json.dumps(meta),
    }, path)


def load_checkpoint(path) -> tuple[MDNet, dict]:
    archive = torch.load(Path(path), map_location="cpu", weights_only=True)
    cfg = json.loads(archive["config"])
    cfg["input_shape"] = tuple(cfg["input_shape"])
    model = MDNet(ModelConfig(**cfg))
    model.load_state_dict(archive["state_dict"])
    model.eval()
    return model, json.loads(archive["meta"])


import numpy as np
import pytest
import torch

from mdnet.errors import IndivisibleShape, InvalidReduction, ShapeMismatch
from mdnet.model import (PATHS, MDNet, ModelConfig, SEBlock, _cat, build_model, count_params,
                         load_checkpoint, parameter_groups, predict_probs, save_checkpoint,
                         trace_shapes)

SMALL = ModelConfig(in_channels=3, base_filters=4, input_shape=(16, 16, 16))


def _x(cfg, seed=0, scale=1.0):
    g = torch.Generator().manual_seed(seed)
    return scale * torch.randn(1, cfg.in_channels, *cfg.input_shape, generator=g)


def test_se_block_shape_and_zero_input():
    se = SEBlock(12)
    x = torch.randn(2, 12, 3, 4, 5)
    assert se(x).shape == x.shape
    assert not se(torch.zeros(1, 12, 2, 2, 2)).any()


def test_se_block_hand_computed():
    se = SEBlock(2, reduction=4, min_width=4)
    w1 = np.array([[0.5, -1.0], [1.0, 0.25], [-0.3, 0.7], [0.0, 2.0]])
    b1 = np.array([0.1, -0.2, 0.0, 0.3])
    w2 = np.array([[1.0, -0.5, 0.2, 0.4], [-1.0, 0.3, 0.6, 0.1]])
    b2 = np.array([0.05, -0.1])
    with torch.no_grad():
        se.fc1.weight.copy_(torch.tensor(w1))
        se.fc1.bias.copy_(torch.tensor(b1))
        se.fc2.weight.copy_(torch.tensor(w2))
        se.fc2.bias.copy_(torch.tensor(b2))
    x = np.arange(16, dtype=float).reshape(1, 2, 2, 2, 2) / 10 - 0.4
    z = x.mean(axis=(2, 3, 4))[0]
    h = np.maximum(w1 @ z + b1, 0)
    s = 1 / (1 + np.exp(-(w2 @ h + b2)))
    expected = x * s[None, :, None, None, None]
    out = se(torch.tensor(x, dtype=torch.float32)).detach().numpy()
    assert np.max(np.abs(out - expected)) < 1e-6


def test_se_block_rejects_bad_setup():
    with pytest.raises(InvalidReduction):
        SEBlock(0)
    with pytest.raises(InvalidReduction):
        SEBlock(2, reduction=4, min_width=0)


def test_toy_trace_shapes():
    trace = trace_shapes(ModelConfig.toy())
    assert trace["EncBlk-3"] == (96, 4, 4, 4)
    assert trace["EncBlk-1"] == (24, 16, 16, 16)
    assert trace["W-DecCat-2"] == (144, 8, 8, 8)
    for p in PATHS:
        assert trace[f"{p}-Output"] == (1, 32, 32, 32)


@pytest.mark.parametrize("skip", ["own", "shared"])
@pytest.mark.parametrize("wide", [False, True])
def test_decoder_channels_all_wirings(skip, wide):
    trace = trace_shapes(ModelConfig(decoder_skip=skip, e_path_wide=wide), (16, 16, 16))
    cats = [trace[f"{p}-DecCat-{lvl}"][0] for lvl in (2, 1, 0) for p in PATHS]
    assert cats == [144, 192, 240 if wide else 192, 72, 96, 96, 36, 48, 48]
    for p in PATHS:
        for lvl, f in ((2, 48), (1, 24), (0, 12)):
            assert trace[f"{p}-DecSae-{lvl}"] == trace[f"{p}-DecCat-{lvl}"]
            assert trace[f"{p}-DecBlk-{lvl}"][0] == f


def test_outputs_in_unit_interval_and_divisibility():
    model = build_model(SMALL, seed=0).eval()
    with torch.no_grad():
        outs = model(_x(SMALL))
    for o in outs:
        assert o.shape == (1, 1, 16, 16, 16)
        assert (o > 0).all() and (o < 1).all()
    with pytest.raises(IndivisibleShape):
        model(torch.zeros(1, 3, 30, 16, 16))


def test_no_nan_on_large_inputs():
    model = build_model(SMALL, seed=1)
    for mode in (model.train, model.eval):
        mode()
        with torch.no_grad():
            outs = model(_x(SMALL, seed=2, scale=10.0).clamp(-10, 10))
        assert all(torch.isfinite(o).all() for o in outs)


def test_cat_rejects_spatial_mismatch():
    with pytest.raises(ShapeMismatch):
        _cat(torch.zeros(1, 2, 4, 4, 4), torch.zeros(1, 2, 4, 4, 2))


def _hand_count(cfg):
    k3 = cfg.conv_kernel ** 3

    def se(c):
        w = max(c // cfg.se_reduction, cfg.se_min_width)
        return c * w + w + w * c + c

    def unit(cin, cout):
        return k3 * cin * cout + cout + 2 * cout + se(cout)

    def block(cin, cout):
        return unit(cin, cout) + unit(cout, cout)

    f = [cfg.base_filters * 2 ** i for i in range(4)]
    total = block(cfg.in_channels, f[0]) + sum(block(f[i - 1], f[i]) for i in (1, 2, 3))
    for lvl in (2, 1, 0):
        w_cat = f[lvl + 1] + f[lvl]
        for cat in (w_cat, f[lvl] + w_cat, f[lvl] + w_cat):
            total += se(cat) + block(cat, f[lvl])
    return total + 3 * (f[0] + 1)


def test_count_params_matches_hand_sum():
    cfg = ModelConfig.toy()
    assert count_params(MDNet(cfg)) == _hand_count(cfg) == 1729106
    assert count_params(build_model(cfg, 0)) == count_params(build_model(cfg, 1))
    assert count_params(MDNet(ModelConfig(base_filters=24))) > count_params(MDNet(cfg))


def test_every_parameter_receives_gradient():
    model = build_model(SMALL, seed=3).eval()
    outs = model(_x(SMALL, seed=4))
    sum(o.mean() for o in outs).backward()
    dead = [n for n, p in model.named_parameters() if p.grad is None or not p.grad.abs().sum() > 0]
    assert dead == []


def test_gradient_reaches_each_group_in_training_mode():
    model = build_model(SMALL, seed=3).train()
    outs = model(_x(SMALL, seed=4))
    sum(o.mean() for o in outs).backward()
    for name, params in parameter_groups(model).items():
        assert sum(float(p.grad.abs().sum()) for _, p in params if p.grad is not None) > 0, name


def test_shared_wiring_leaves_upper_decoder_blocks_dead():
    cfg = ModelConfig(in_channels=3, base_filters=4, input_shape=(16, 16, 16), decoder_skip="shared")
    model = build_model(cfg, seed=0).eval()
    sum(o.mean() for o in model(_x(cfg))).backward()
    dead = {n.split(".")[1] for n, p in model.named_parameters() if p.grad is None}
    assert dead == {f"{p}-{b}-{lvl}" for p in "CE" for b in ("DecSae", "DecBlk") for lvl in (1, 2)}


def _zeroed(model, path):
    clone = build_model(model.config)
    clone.load_state_dict(model.state_dict())
    with torch.no_grad():
        for _, p in parameter_groups(clone)[path]:
            p.zero_()
    return clone.eval()


@pytest.mark.parametrize("path,changed", [("E", (False, False, True)), ("C", (False, True, True)),
                                          ("W", (True, True, True))])
def test_cross_feed_direction(path, changed):
    model = build_model(SMALL, seed=5).eval()
    x = _x(SMALL, seed=6)
    with torch.no_grad():
        base = model(x)
        after = _zeroed(model, path)(x)
    assert tuple(not torch.equal(a, b) for a, b in zip(base, after)) == changed


def test_checkpoint_roundtrip(tmp_path):
    cfg = ModelConfig(in_channels=3, base_filters=4, input_shape=(16, 16, 16), e_path_wide=True)
    model = build_model(cfg, seed=7)
    save_checkpoint(model, tmp_path / "m.pt", seed=7)
    back, meta = load_checkpoint(tmp_path / "m.pt")
    assert meta == {"seed": 7}
    assert back.config == cfg
    assert "blocks.C-DecBlk-1.0.conv.weight" in back.state_dict()
    image = _x(cfg)[0].numpy()
    a, b = predict_probs(model, image), predict_probs(back, image)
    assert all(np.array_equal(p, q) for p, q in zip(a.as_tuple(), b.as_tuple()))

import numpy as np
import pytest

from wemf.autodiff import Tensor, backward, ops
from wemf.autodiff.nn import layer_norm
from wemf.net import (PAPER_SCALE, ModelConfig, count_params, count_params_config, depthwise_flops,
                      estimate_flops, forward, forward_features, init_weights, linear_flops, mfe_weights,
                      patch_embed, patch_expand, patch_merge, pixel_rearrange, predict)
from wemf.mfe import mfe_forward
from wemf.ssm import vss_block
from wemf.windowing import tri_window_stack


@pytest.fixture
def rng():
    return np.random.default_rng(77)


def _embed_weights(rng, p, c, d, bias=True):
    return {"patch_embed.weight": Tensor(rng.standard_normal((p * p * c, d))),
            "patch_embed.bias": Tensor(rng.standard_normal(d) if bias else np.zeros(d)),
            "patch_embed.norm.gamma": Tensor(np.ones(d)), "patch_embed.norm.beta": Tensor(np.zeros(d))}


def test_patch_embed_shape_and_zero(rng):
    w = _embed_weights(rng, 4, 3, 32, bias=False)
    assert patch_embed(Tensor(rng.standard_normal((64, 64, 3))), w, 4).shape == (16, 16, 32)
    assert np.all(patch_embed(Tensor(np.zeros((8, 8, 3))), w, 4).data == 0)
    with pytest.raises(ValueError, match="divisible"):
        patch_embed(Tensor(np.zeros((6, 8, 3))), w, 4)


def test_patch_embed_matches_unfold(rng):
    p, d = 4, 5
    w = _embed_weights(rng, p, 3, d)
    x = rng.standard_normal((8, 8, 3))
    ref = np.zeros((2, 2, d))
    for i in range(2):
        for j in range(2):
            patch = x[i * p:(i + 1) * p, j * p:(j + 1) * p, :].reshape(-1)
            ref[i, j] = patch @ w["patch_embed.weight"].data + w["patch_embed.bias"].data
    ref = (ref - ref.mean(-1, keepdims=True)) / np.sqrt(ref.var(-1, keepdims=True) + 1e-5)
    assert np.abs(patch_embed(Tensor(x), w, p).data - ref).max() < 1e-10


def test_patch_merge_matches_gather(rng):
    x = rng.standard_normal((4, 6, 3))
    W = rng.standard_normal((12, 7))
    g, b = np.ones(7), np.zeros(7)
    out = patch_merge(Tensor(x), Tensor(W), Tensor(g), Tensor(b)).data
    ref = np.zeros((2, 3, 7))
    for i in range(2):
        for j in range(3):
            cat = np.concatenate([x[2 * i, 2 * j], x[2 * i, 2 * j + 1], x[2 * i + 1, 2 * j], x[2 * i + 1, 2 * j + 1]])
            ref[i, j] = cat @ W
    ref = (ref - ref.mean(-1, keepdims=True)) / np.sqrt(ref.var(-1, keepdims=True) + 1e-5)
    assert np.abs(out - ref).max() < 1e-10
    with pytest.raises(ValueError):
        patch_merge(Tensor(np.ones((3, 4, 3))), Tensor(W), Tensor(g), Tensor(b))


def test_merge_expand_shapes(rng):
    x = Tensor(rng.standard_normal((16, 16, 32)))
    m = patch_merge(x, Tensor(rng.standard_normal((128, 64))), Tensor(np.ones(64)), Tensor(np.zeros(64)))
    assert m.shape == (8, 8, 64)
    assert patch_expand(m, Tensor(rng.standard_normal((64, 128)))).shape == (16, 16, 32)


def test_pixel_rearrange_layout():
    x = np.arange(2 * 1 * 8, dtype=float).reshape(1, 2, 8)
    out = pixel_rearrange(Tensor(x), 2).data
    assert out.shape == (2, 4, 2)
    # channel block k of pixel (0, j) lands at (k // 2, 2j + k % 2)
    for j in range(2):
        for k in range(4):
            assert np.array_equal(out[k // 2, 2 * j + k % 2], x[0, j, 2 * k:2 * k + 2])
    with pytest.raises(ValueError):
        pixel_rearrange(Tensor(np.ones((2, 2, 6))), 2)


def test_forward_shape_and_determinism(rng):
    cfg = ModelConfig()
    w = init_weights(cfg, seed=3)
    hu = rng.integers(-200, 300, size=(64, 64))
    a = forward(hu, cfg, w).data
    b = forward(hu, cfg, w).data
    assert a.shape == (64, 64, 3)
    assert a.tobytes() == b.tobytes()
    assert predict(hu, cfg, w).shape == (64, 64)


def test_init_is_seeded():
    cfg = ModelConfig(img_size=[32, 32])
    a, b, c = init_weights(cfg, 1), init_weights(cfg, 1), init_weights(cfg, 2)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert any(not np.array_equal(a[k].data, c[k].data) for k in a)


def test_forward_errors(rng):
    cfg = ModelConfig()
    w = init_weights(cfg)
    with pytest.raises(ValueError, match="divisible"):
        forward(np.zeros((60, 64)), cfg, w)
    with pytest.raises(ValueError, match="MFE"):
        forward(np.zeros((32, 32)), cfg, w)


def test_config_validation():
    for bad in (dict(dims=[30, 64, 128]), dict(depths=[2, 2]), dict(dims=[64, 32, 128]), dict(img_size=[40, 64]),
                dict(in_channels=1)):
        with pytest.raises(ValueError):
            ModelConfig(**bad).validate()


def test_plain_backbone_has_no_mfe_weights(rng):
    cfg = ModelConfig(mfe_enabled=False)
    w = init_weights(cfg)
    assert not any(k.startswith("mfe.") for k in w)
    assert forward(rng.integers(-100, 100, (32, 32)), cfg, w).shape == (32, 32, 3)


def test_decoder_fuses_expanded_path_with_enhanced_skip(rng):
    cfg = ModelConfig(depths=[1, 1], dims=[8, 16], d_state=2, img_size=[16, 16])
    w = init_weights(cfg, 0)
    w["dec.0.blocks.0.out_proj"] = Tensor(np.zeros_like(w["dec.0.blocks.0.out_proj"].data))
    x = Tensor(tri_window_stack(rng.integers(-150, 250, (16, 16))))

    def sub(prefix):
        return {k[len(prefix) + 1:]: v for k, v in w.items() if k.startswith(prefix + ".")}

    skip = vss_block(patch_embed(x, w, 4), sub("enc.0.blocks.0"))
    t = patch_merge(skip, w["enc.0.merge.weight"], w["enc.0.merge.norm.gamma"], w["enc.0.merge.norm.beta"])
    t = vss_block(t, sub("enc.1.blocks.0"))
    fused = patch_expand(t, w["dec.0.expand.weight"]).data + mfe_forward(skip, mfe_weights(w, 0)).data
    t = pixel_rearrange(ops.linear(Tensor(fused), w["final_expand.weight"]), 4)
    t = layer_norm(t, w["final_expand.norm.gamma"], w["final_expand.norm.beta"])
    expected = ops.linear(t, w["head.weight"], w["head.bias"]).data
    assert np.abs(forward_features(x, cfg, w).data - expected).max() < 1e-12


def test_end_to_end_gradient_of_early_parameter(rng):
    cfg = ModelConfig(img_size=[32, 32])
    w = init_weights(cfg, 0)
    hu = rng.integers(-150, 250, (32, 32))
    name = "patch_embed.bias"
    backward(forward(hu, cfg, w).sum())
    analytic = w[name].grad.copy()
    eps = 1e-5
    worst = 0.0
    for i in range(0, cfg.dims[0], 7):
        orig = w[name].data[i]
        w[name].data[i] = orig + eps
        fp = forward(hu, cfg, w).data.sum()
        w[name].data[i] = orig - eps
        fm = forward(hu, cfg, w).data.sum()
        w[name].data[i] = orig
        worst = max(worst, abs(analytic[i] - (fp - fm) / (2 * eps)) / max(1.0, abs(analytic[i])))
    assert worst < 1e-3


def test_param_counts():
    assert count_params({"w": np.zeros((3, 8)), "b": np.zeros(8)}) == 32
    for cfg in (ModelConfig(), ModelConfig(mfe_enabled=False), ModelConfig(depths=[1, 2], dims=[8, 16],
                                                                            img_size=[16, 32], ssm_expand=1)):
        assert count_params(init_weights(cfg)) == count_params_config(cfg)


def test_paper_scale_count_is_reported():
    n = count_params_config(ModelConfig(**PAPER_SCALE))
    assert 10e6 < n < 200e6


def test_flop_conventions():
    assert linear_flops(1, 3, 8) == 48
    assert depthwise_flops(16, 16, 4) == 2 * 9 * 16 * 16 * 4
    base = estimate_flops(ModelConfig())
    assert base > estimate_flops(ModelConfig(mfe_enabled=False)) > 0
    assert estimate_flops(ModelConfig(img_size=[128, 128])) == pytest.approx(4 * base, rel=0.1)

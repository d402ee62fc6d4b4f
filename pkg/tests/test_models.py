import numpy as np
import pytest

from protectkit import models as M
from protectkit import tensor as T
from protectkit.jpeg import JpegConfig, jpeg_unit
from protectkit.tensor import Tensor


def images(rng, n=2, size=16):
    return rng.uniform(0.2, 0.8, size=(n, 3, size, size))


@pytest.mark.parametrize("factory", [M.toy_recon_model, M.toy_blend_model])
def test_toy_model_shape_range_and_target(factory, rng):
    spec = factory(seed=3)
    x = Tensor(images(rng))
    out = spec(x, x if spec.arity == 2 else None)
    assert out.shape == x.shape
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0
    target = spec.target(out.shape)
    assert target.shape == out.shape
    assert np.all(target == target[:, :, :1, :1])


def test_default_targets():
    assert M.toy_recon_model().target_color == M.WHITE
    assert M.toy_blend_model().target_color == M.BLUE
    assert M.toy_recon_model().arity == 1 and M.toy_blend_model().arity == 2


def test_toy_model_is_seeded():
    assert M.toy_recon_model(4).fingerprint() == M.toy_recon_model(4).fingerprint()
    assert M.toy_recon_model(4).fingerprint() != M.toy_recon_model(5).fingerprint()


def test_toy_model_roughly_reconstructs_smooth_images():
    # a flat grey image stays close to grey; it is far from the white target
    x = np.full((1, 3, 32, 32), 0.5, dtype=np.float32)
    out = M.toy_recon_model(0)(Tensor(x)).data
    assert abs(float(out[:, :, 8:-8, 8:-8].mean()) - 0.5) < 0.15


def test_blend_needs_source_without_grad(rng):
    spec = M.toy_blend_model()
    x = Tensor(images(rng))
    with pytest.raises(ValueError):
        spec(x)
    with pytest.raises(ValueError):
        spec(x, Tensor(images(rng), requires_grad=True))


def test_identity_model():
    spec = M.identity_model((0.0, 1.0, 0.0))
    x = Tensor(np.full((1, 3, 2, 2), 0.3))
    assert spec(x) is x
    np.testing.assert_array_equal(spec.target((1, 3, 2, 2))[0, :, 0, 0], [0, 1, 0])


@pytest.mark.parametrize("size,depth", [(16, 2), (64, 4), (256, 6), (1024, 6), (4, 1)])
def test_unet_depth(size, depth):
    assert M.unet_depth(size) == depth


@pytest.mark.parametrize("size", [16, 32, 64])
def test_unet_output_shape(size, rng):
    gen = M.unet_generator(8, seed=0, image_size=size)
    x = Tensor(rng.normal(size=(2, 6, size, size)))
    assert gen(x).shape == (2, 3, size, size)


def unet_param_count(base, depth, cin=6, cout=3):
    widths = M.unet_widths(base, depth)
    n, prev = 0, cin
    for w in widths:
        n += w * prev * 16 + w
        prev = w
    for i in reversed(range(depth)):
        a = widths[i] if i == depth - 1 else 2 * widths[i]
        b = widths[i - 1] if i > 0 else cout
        n += a * b * 16 + b
    return n


def test_full_width_parameter_count():
    # widths 64..512 over six levels at 256 x 256
    assert M.unet_widths(64, 6) == [64, 128, 256, 512, 512, 512]
    count = unet_param_count(64, 6)
    assert count == 29_244_803
    assert abs(count - 29.24e6) / 29.24e6 < 0.05


@pytest.mark.parametrize("base,size", [(8, 32), (16, 64)])
def test_built_parameter_count_matches_formula(base, size):
    gen = M.unet_generator(base, image_size=size)
    assert gen.count() == unet_param_count(base, M.unet_depth(size))


def test_generator_init_statistics():
    gen = M.unet_generator(16, seed=7, image_size=64)
    w = np.concatenate([p.data.ravel() for k, p in gen.params.items() if k.endswith("weight")])
    assert abs(w.std() - 0.02) < 0.001
    assert all(not p.data.any() for k, p in gen.params.items() if k.endswith("bias"))


def test_unet_errors(rng):
    with pytest.raises(ValueError):
        M.unet_generator(12)
    with pytest.raises(ValueError):
        M.unet_generator(8, image_size=48, depth=5)
    gen = M.unet_generator(8, image_size=16)
    with pytest.raises(ValueError):
        gen(Tensor(rng.normal(size=(1, 6, 10, 10))))


def test_zero_generator_leaves_image_unchanged(rng):
    gen = M.unet_generator(8, image_size=16)
    for p in gen.params.values():
        p.data[...] = 0
    x = Tensor(images(rng))
    delta, xp = M.apply_protection(gen, x, np.zeros((3, 16, 16)), 0.05)
    assert not delta.data.any()
    np.testing.assert_array_equal(xp.data, x.data)


@pytest.mark.parametrize("eps", [0.01, 0.03, 0.1])
def test_protection_respects_eps_and_range(eps, rng):
    gen = M.unet_generator(8, seed=1, image_size=16)
    for p in gen.params.values():
        p.data *= 40.0
    x = Tensor(rng.uniform(0, 1, size=(3, 3, 16, 16)))
    dg = rng.uniform(-eps, eps, size=(1, 3, 16, 16))
    _, xp = M.apply_protection(gen, x, dg, eps)
    assert np.abs(xp.data - x.data).max() <= eps + 1e-6
    assert xp.data.min() >= 0 and xp.data.max() <= 1
    # the scaled-up generator saturates somewhere
    assert np.isclose(np.abs(xp.data - x.data).max(), eps, atol=1e-6)


def test_protection_shape_mismatch(rng):
    gen = M.unet_generator(8, image_size=16)
    with pytest.raises(ValueError):
        M.apply_protection(gen, Tensor(images(rng)), np.zeros((3, 8, 8)), 0.05)


def composite_loss(gen, spec, x, dg, cfg):
    _, xp = M.apply_protection(gen, x, dg, 0.05)
    out = spec(jpeg_unit(xp, cfg))
    return T.mse(out, Tensor(spec.target(out.shape)))


def test_composite_gradient_matches_directional_differences(f64):
    """generator -> clamp -> sin JPEG -> toy model -> loss, checked along random directions."""
    rng = np.random.default_rng(11)
    gen = M.unet_generator(8, seed=2, image_size=16).astype(np.float64).trainable(True)
    spec = M.toy_recon_model(0)
    spec = M.ManipulationSpec(spec.name, spec.model.astype(np.float64), spec.target_color)
    x = Tensor(images(rng, 1))
    dg = rng.uniform(-0.05, 0.05, size=(1, 3, 16, 16))
    cfg = JpegConfig(70, "sin")
    loss = composite_loss(gen, spec, x, dg, cfg)
    T.backward(loss)
    grads = {k: p.grad.copy() for k, p in gen.params.items()}
    base = {k: p.data.copy() for k, p in gen.params.items()}
    h = 1e-6
    for _ in range(5):
        v = {k: rng.normal(size=b.shape) for k, b in base.items()}
        analytic = sum(float(np.sum(grads[k] * v[k])) for k in base)
        vals = []
        for sgn in (1, -1):
            for k, p in gen.params.items():
                p.data = base[k] + sgn * h * v[k]
            vals.append(composite_loss(gen, spec, x, dg, cfg).item())
        numeric = (vals[0] - vals[1]) / (2 * h)
        assert abs(analytic - numeric) <= 1e-3 * max(abs(analytic), abs(numeric))


def test_checkpoint_roundtrip(tmp_path):
    gen = M.unet_generator(8, seed=5, image_size=32)
    path = M.save_checkpoint(gen, tmp_path / "gen.ckpt", {"eps": 0.05})
    loaded, meta = M.load_checkpoint(path)
    assert loaded.fingerprint() == gen.fingerprint()
    assert loaded.arch == gen.arch
    assert meta == {"eps": "0.05"}
    text = path.read_text()
    assert "param.enc0.weight = shape=8x6x4x4 dtype=float32 offset=" in text


def test_checkpoint_validation(tmp_path):
    gen = M.unet_generator(8, seed=5, image_size=32)
    path = M.save_checkpoint(gen, tmp_path / "gen.ckpt")
    blob = tmp_path / "gen.ckpt.bin"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(ValueError, match="truncated"):
        M.load_checkpoint(path)
    M.save_checkpoint(gen, path)
    path.write_text(path.read_text().replace("shape=8x6x4x4", "shape=8x6x2x8"))
    with pytest.raises(ValueError, match="architecture expects"):
        M.load_checkpoint(path)
    path.write_text("format = something-else\n")
    with pytest.raises(ValueError):
        M.load_checkpoint(path)


def test_toy_checkpoint_and_array(tmp_path):
    spec = M.toy_blend_model(2)
    loaded, _ = M.load_checkpoint(M.save_checkpoint(spec.model, tmp_path / "toy.ckpt"))
    assert loaded.fingerprint() == spec.fingerprint()
    arr = np.random.default_rng(0).uniform(-1, 1, size=(1, 3, 8, 8)).astype(np.float32)
    back, meta = M.load_array(M.save_array(arr, tmp_path / "dg.ckpt", {"eps": 0.1}))
    np.testing.assert_array_equal(back, arr)
    assert meta["eps"] == "0.1"

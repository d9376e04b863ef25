import numpy as np
import pytest

import dmphn


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(7)


def test_fresh_model_keeps_input_scale(rng):
    m = dmphn.Model(kind="dmphn", pattern="1-2", profile="desk", seed=0)
    x = rng.uniform(-0.5, 0.5, size=(1, 3, 32, 32)).astype(np.float32)
    y = m.forward(x)
    assert y.shape == x.shape
    assert np.all(np.isfinite(y))
    # untrained residuals are nonzero but stay at input scale
    residual = float(np.sqrt(np.mean((y - x) ** 2)))
    assert 0.0 < residual < 4.0


def test_model_metadata():
    m = dmphn.Model(kind="dmphn", pattern="1-2-4", seed=0)
    assert m.kind == "dmphn"
    assert m.pattern == "1-2-4"
    # published budget: 21.7 MB of f32 weights, within 10%
    assert abs(m.param_count * 4 - 21.7e6) <= 0.1 * 21.7e6

    flops = m.flops(720, 1280)
    assert len(flops) == 3
    assert max(flops) - min(flops) <= 0.01 * max(flops)


def test_checkpoint_round_trip(tmp_path, rng):
    m = dmphn.Model(kind="vmphn", pattern="1-2", profile="desk", seed=3)
    path = str(tmp_path / "m.ckpt")
    m.save(path)
    n = dmphn.load(path)
    assert n.kind == "vmphn"
    assert n.param_count == m.param_count
    x = rng.uniform(-0.5, 0.5, size=(2, 3, 32, 32)).astype(np.float32)
    assert np.array_equal(m.forward(x), n.forward(x))


def test_deblur_any_size(rng):
    m = dmphn.Model(kind="dmphn", pattern="1-2", profile="desk", seed=1)
    img = rng.uniform(0.0, 1.0, size=(1, 3, 37, 41)).astype(np.float32)
    out = m.deblur(img)
    assert out.shape == img.shape
    assert out.dtype == np.float32
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_metrics_identities(rng):
    a = rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)).astype(np.float32)
    assert dmphn.psnr(a, a) == pytest.approx(100.0)
    assert dmphn.ssim(a, a) == pytest.approx(1.0)
    b = np.clip(a + 0.1, 0.0, 1.0).astype(np.float32)
    assert dmphn.psnr(a, b) < 100.0


def test_dataset_and_images(tmp_path):
    root = tmp_path / "ds"
    manifest = dmphn.gen_dataset(str(root), count=4, height=24, width=24, seed=2)
    assert (root / "manifest.json").exists()
    assert manifest == str(root / "manifest.json")

    blur_dir = root / "train" / "blur"
    first = sorted(blur_dir.iterdir())[0]
    img = dmphn.load_image(str(first))
    assert img.shape == (1, 3, 24, 24)
    assert img.dtype == np.float32

    out = tmp_path / "copy.png"
    dmphn.save_image(img, str(out))
    again = dmphn.load_image(str(out))
    assert np.array_equal(img, again)


def test_bad_inputs_raise():
    with pytest.raises(ValueError):
        dmphn.Model(kind="dmphn", pattern="1-3")
    with pytest.raises(ValueError):
        dmphn.Model(kind="dmphn", stack=2)
    m = dmphn.Model(kind="dmphn", pattern="1", profile="desk")
    with pytest.raises(ValueError):
        m.forward(np.zeros((3, 16, 16), dtype=np.float32))  # not 4-d

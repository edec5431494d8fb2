import math

import numpy as np
import pytest

import starnet


def test_metrics():
    rng = np.random.default_rng(0)
    a = rng.random((3, 32, 32))
    b = np.clip(a + 0.1, 0, 1)
    assert starnet.psnr(a, a) == math.inf
    assert starnet.psnr(np.zeros((3, 8, 8)), np.full((3, 8, 8), 0.1)) == pytest.approx(20.0, abs=1e-9)
    assert starnet.ssim(a, a) == pytest.approx(1.0, abs=1e-9)
    assert starnet.ssim(a, b) == pytest.approx(starnet.ssim(b, a), abs=1e-12)
    with pytest.raises(starnet.ParameterError):
        starnet.ssim(np.zeros((3, 4, 4)), np.zeros((3, 4, 4)))


def test_smooth_l1_and_schedule():
    z = np.zeros(1)
    assert [starnet.smooth_l1(np.full(1, t), z) for t in (0.0, 0.5, 1.0, 3.0)] == [0.0, 0.125, 0.5, 2.5]
    assert [starnet.lr_at_epoch(2e-5, e) for e in (0, 39, 40, 200)] == [2e-5, 2e-5, 1e-5, 6.25e-7]


def test_channel_shuffle():
    x = np.arange(8, dtype=np.float64).reshape(1, 8, 1, 1)
    y = starnet.channel_shuffle(x, 2)
    assert y.ravel().tolist() == [0, 4, 1, 5, 2, 6, 3, 7]


def test_synthesis():
    clean = starnet.procedural_clean(32, 48, 3)
    assert clean.shape == (3, 32, 48)
    snowy, back = starnet.synthesize_pair(clean, seed=5)
    assert snowy.shape == clean.shape
    assert np.array_equal(back, clean)
    assert not np.array_equal(snowy, clean)
    again, _ = starnet.synthesize_pair(clean, seed=5)
    assert np.array_equal(snowy, again)


def test_model_roundtrip(tmp_path):
    model = starnet.Model("micro", seed=4)
    assert model.parameter_count < 5000
    x = np.random.default_rng(1).random((2, 3, 8, 8))
    y = model.forward(x)
    assert y.shape == x.shape and np.isfinite(y).all()

    path = tmp_path / "m.ckpt"
    model.save(path)
    back = starnet.Model.load(path)
    assert back.config_text == model.config_text
    assert np.array_equal(back.forward(x), y)

    restored = model.restore(np.random.default_rng(2).random((3, 13, 10)))
    assert restored.shape == (3, 13, 10)
    assert restored.min() >= 0 and restored.max() <= 1


def test_errors(tmp_path):
    with pytest.raises(starnet.ConfigError):
        starnet.Model("micro", flags={"use_wavelets": False})
    with pytest.raises(starnet.ShapeError):
        starnet.Model("tiny").forward(np.zeros((1, 3, 60, 64)))
    with pytest.raises(starnet.CheckpointError):
        starnet.Model.load(tmp_path / "missing.ckpt")
    with pytest.raises(starnet.IngestionError):
        starnet.load_manifest(tmp_path / "nothing")


def test_ablation_flags():
    for flag, value in [("use_ssc", False), ("use_mit", False), ("use_dfm", False), ("msam_to_va", True)]:
        y = starnet.Model("micro", flags={flag: value}).forward(np.zeros((1, 3, 8, 8)))
        assert np.isfinite(y).all()


def test_vgg16_export(tmp_path):
    torchvision = pytest.importorskip("torchvision")
    import subprocess
    import sys
    from pathlib import Path

    import torch

    torch.manual_seed(0)
    net = torchvision.models.vgg16(weights=None)
    sd_path = tmp_path / "vgg16.pth"
    torch.save(net.state_dict(), sd_path)
    out = tmp_path / "vgg16.ckpt"
    tool = Path(__file__).resolve().parents[2] / "tools" / "export_vgg16.py"
    subprocess.run([sys.executable, str(tool), str(out), "--state-dict", str(sd_path)], check=True)

    fx = starnet.Vgg16Features(out)
    assert fx.pretrained
    x = np.random.default_rng(0).random((1, 3, 32, 32))
    taps = fx.features(x)
    assert [t.shape for t in taps] == [(1, 64, 32, 32), (1, 128, 16, 16), (1, 256, 8, 8)]

    mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
    with torch.no_grad():
        ref = net.features[:16]((torch.from_numpy(x).float() - mean) / std).numpy()
    np.testing.assert_allclose(taps[2], ref, rtol=1e-4, atol=1e-5)
    assert not starnet.Vgg16Features().pretrained

import math

import numpy as np
import pytest

from dpm_latent import make_rng
from dpm_latent.errors import ConfigError
from dpm_latent.metrics import (
    PSNR_CAP,
    mmd2,
    psnr,
    random_directions,
    sliced_w1,
    ssim,
    write_metric_rows,
)

# frozen: 20 * log10(255)
PSNR_255 = 48.1308036086791
# frozen: 2 - 2 exp(-1/2)
MMD_HAND = 0.7869386805747332


def _ssim_reference(x, y, peak=1.0, size=7, sigma=1.5, K1=0.01, K2=0.03):
    """Straight-from-definition SSIM: explicit loops over windows and pixels."""
    half = size // 2
    weights = [[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma**2)) for j in range(size)] for i in range(size)]
    total = sum(sum(r) for r in weights)
    C1, C2 = (K1 * peak) ** 2, (K2 * peak) ** 2
    vals = []
    H, W = len(x), len(x[0])
    for r0 in range(H - size + 1):
        for c0 in range(W - size + 1):
            mx = my = 0.0
            for i in range(size):
                for j in range(size):
                    w = weights[i][j] / total
                    mx += w * x[r0 + i][c0 + j]
                    my += w * y[r0 + i][c0 + j]
            vx = vy = cxy = 0.0
            for i in range(size):
                for j in range(size):
                    w = weights[i][j] / total
                    dx, dy = x[r0 + i][c0 + j] - mx, y[r0 + i][c0 + j] - my
                    vx += w * dx * dx
                    vy += w * dy * dy
                    cxy += w * dx * dy
            vals.append((2 * mx * my + C1) * (2 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2)))
    return sum(vals) / len(vals)


def test_psnr_examples():
    assert psnr(np.zeros((4, 4)), np.ones((4, 4)), peak=255) == pytest.approx(PSNR_255, abs=1e-12)
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0, abs=1e-12)
    x = make_rng(0).random((8, 8))
    assert psnr(x, x) == PSNR_CAP == 100.0


def test_psnr_shape_mismatch():
    with pytest.raises(ConfigError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_identical_and_constant():
    x = make_rng(1).random((12, 12))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    assert ssim(np.full((9, 9), 0.3), np.full((9, 9), 0.3)) == 1.0


def test_ssim_checkerboard_vs_reference():
    cb = (np.indices((8, 8)).sum(axis=0) % 2).astype(float)
    inv = 1.0 - cb
    ref = _ssim_reference(cb.tolist(), inv.tolist())
    assert ssim(cb, inv, peak=1.0, window=7, K1=0.01, K2=0.03) == pytest.approx(ref, abs=1e-8)
    assert ref < 0


def test_ssim_random_vs_reference():
    rng = make_rng(2)
    x, y = rng.random((10, 9)), rng.random((10, 9))
    assert ssim(x, y) == pytest.approx(_ssim_reference(x.tolist(), y.tolist()), abs=1e-10)


def test_symmetry_exact():
    rng = make_rng(3)
    x, y = rng.random((16, 16)), rng.random((16, 16))
    assert ssim(x, y) == ssim(y, x)
    assert psnr(x, y) == psnr(y, x)


def test_ssim_multichannel_is_channel_mean():
    rng = make_rng(4)
    x, y = rng.random((10, 10, 3)), rng.random((10, 10, 3))
    assert ssim(x, y) == pytest.approx(np.mean([ssim(x[..., c], y[..., c]) for c in range(3)]), abs=1e-15)


def test_ssim_errors():
    with pytest.raises(ConfigError):
        ssim(np.zeros((5, 5)), np.zeros((5, 5)))
    with pytest.raises(ConfigError):
        ssim(np.zeros((8, 8)), np.zeros((8, 9)))
    with pytest.raises(ConfigError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)), window=4)


def test_mmd2_examples():
    assert mmd2([[0.0]], [[1.0]], bandwidth=1.0) == pytest.approx(MMD_HAND, abs=1e-12)
    X = make_rng(5).standard_normal((50, 2))
    assert mmd2(X, X) == 0.0
    rng = make_rng(6)
    assert mmd2(rng.standard_normal((1000, 2)), rng.standard_normal((1000, 2))) < 0.01


def test_mmd2_detects_shift_and_errors():
    rng = make_rng(7)
    assert mmd2(rng.standard_normal((500, 1)), 1 + rng.standard_normal((500, 1)), bandwidth=1.0) > 0.05
    with pytest.raises(ConfigError):
        mmd2(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ConfigError):
        mmd2(np.zeros((2, 2)), np.zeros((3, 3)))


def test_sliced_w1_examples():
    rng = make_rng(8)
    assert sliced_w1([[0.0]], [[1.0]], rng=rng) == pytest.approx(1.0, abs=1e-15)
    X = rng.standard_normal((200, 3))
    assert sliced_w1(X, X, rng=rng) == 0.0
    v = np.array([0.6, -0.8]) * 1.5
    Y = rng.standard_normal((300, 2))
    got = sliced_w1(Y, Y + v, n_projections=20_000, rng=rng)
    assert got == pytest.approx(2 * np.linalg.norm(v) / np.pi, rel=0.01)


def test_sliced_w1_unequal_sizes_and_errors():
    rng = make_rng(9)
    assert sliced_w1(np.zeros((3, 1)), np.ones((5, 1)), rng=rng) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        sliced_w1(np.zeros((0, 1)), np.ones((5, 1)), rng=rng)
    with pytest.raises(ConfigError):
        sliced_w1(np.zeros((3, 1)), np.ones((3, 1)))


def test_sliced_w1_triangle_inequality():
    rng = make_rng(10)
    A = rng.standard_normal((300, 3))
    B = rng.standard_normal((300, 3)) * 1.5 + 0.5
    C = rng.standard_normal((300, 3)) - 1.0
    dirs = random_directions(3, 10_000, rng)
    d = lambda P, Q: sliced_w1(P, Q, directions=dirs)  # noqa: E731
    assert d(A, C) <= d(A, B) + d(B, C) + 1e-3


def test_metric_csv(tmp_path):
    rows = [("r1", "ssim", 0.1 + 0.2), ("r1", "psnr", 100.0)]
    write_metric_rows(tmp_path / "m.csv", rows)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "run_id,metric,value"
    assert float(lines[1].split(",")[2]) == 0.1 + 0.2

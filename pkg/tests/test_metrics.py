import math

import numpy as np
import pytest

from deepcofib.metrics import psnr, ssim


def test_psnr_identical():
    x = np.random.default_rng(0).random((8, 8))
    assert psnr(x, x) == math.inf


def test_psnr_zero_db():
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == 0.0


def test_psnr_uniform_offset():
    x = np.random.default_rng(1).random((32, 32)) * 0.8
    assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_symmetric_and_monotone(rng):
    a, b = rng.random((16, 16)), rng.random((16, 16))
    assert psnr(a, b) == psnr(b, a)
    values = [psnr(a, a + delta) for delta in (0.01, 0.05, 0.1, 0.3)]
    assert values == sorted(values, reverse=True)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((3, 3)), np.zeros((3, 4)))


def test_ssim_self(rng):
    x = rng.random((20, 13))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)


def test_ssim_symmetric(rng):
    a, b = rng.random((16, 16)), rng.random((16, 16))
    assert ssim(a, b) == ssim(b, a)


def test_ssim_inverted_binary(rng):
    a = (rng.random((16, 16)) > 0.5).astype(float)
    assert ssim(a, 1 - a) < 0


def test_ssim_constant_closed_form():
    p, q = 0.3, 0.7
    c1, c2 = 0.01**2, 0.03**2
    want = (2 * p * q + c1) * c2 / ((p * p + q * q + c1) * c2)
    assert ssim(np.full((9, 9), p), np.full((9, 9), q)) == pytest.approx(want, rel=1e-9)


def test_ssim_window_oracle(rng):
    a, b = rng.random((10, 9)), rng.random((10, 9))
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for r in range(3):
        for c in range(2):
            x, y = a[r : r + 8, c : c + 8], b[r : r + 8, c : c + 8]
            mx, my = x.mean(), y.mean()
            vx, vy = x.var(), y.var()
            cov = ((x - mx) * (y - my)).mean()
            vals.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    assert ssim(a, b) == pytest.approx(np.mean(vals), rel=1e-10)


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((7, 20)), np.zeros((7, 20)))

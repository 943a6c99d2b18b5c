import numpy as np
import pytest

from gmareg import metrics as M
from gmareg.losses import photometric
from gmareg.tensor import Tensor
from oracles import ssim_oracle


def test_ssim_matches_window_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(size=(16, 16)), rng.uniform(size=(16, 16))
    L = b.max() - b.min()
    assert abs(M.ssim(a, b) - ssim_oracle(a, b, L)) < 1e-10


def test_ssim_identity_and_anticorrelation():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((24, 24))
    assert M.ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    # checkerboard windows are (nearly) zero-mean, so the structure term sets the sign
    yy, xx = np.mgrid[0:24, 0:24]
    c = ((yy + xx) % 2) * 2 - 1.0
    assert M.ssim(-c, c) < -0.9


def test_ssim_constant_images():
    z = np.zeros((16, 16))
    assert M.ssim(z, z) == 1.0
    assert M.ssim(z + 1, z) < 1.0


def test_ssim_symmetric_with_shared_range():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(size=(20, 20)), rng.uniform(size=(20, 20))
    assert M.ssim(a, b, data_range=1.0) == pytest.approx(M.ssim(b, a, data_range=1.0), abs=1e-14)


def test_psnr_nrmse_fixed_points():
    a = np.arange(16.0).reshape(4, 4)
    assert M.nrmse(a, a) == 0.0
    assert M.psnr(a, a) == M.PSNR_INF


def test_psnr_formula():
    b = np.zeros((10, 10))
    b[0, 0] = 1.0                      # peak (span) = 1
    a = b + 0.1                        # MSE = peak^2 / 100
    assert M.psnr(a, b) == pytest.approx(20.0, abs=1e-10)


def test_two_by_two_hand_case():
    b = np.array([[0.0, 1.0], [2.0, 3.0]])
    a = np.array([[0.0, 1.0], [2.0, 5.0]])
    # MSE = 4/4 = 1, span 3
    assert M.nrmse(a, b) == pytest.approx(1.0 / 3.0)
    assert M.psnr(a, b) == pytest.approx(10 * np.log10(9.0))


def test_hfen_properties():
    rng = np.random.default_rng(3)
    yy, xx = np.mgrid[0:32, 0:32]
    b = np.sin(xx / 5.0) + np.cos(yy / 7.0) + 0.1 * rng.standard_normal((32, 32))
    assert M.hfen(b, b) == 0.0
    assert M.hfen(b + 3.0, b) < 1e-12
    # 3-pixel squares: fine detail in the LoG pass band (pixel-level
    # alternation is at Nyquist, which the sigma=1.5 Gaussian suppresses)
    checker = ((yy // 3 + xx // 3) % 2) * 2 - 1.0
    ramp = (xx - xx.mean()) / 31.0
    ramp *= np.linalg.norm(checker) / np.linalg.norm(ramp)
    eps = 0.05
    assert M.hfen(b + eps * checker, b) > M.hfen(b + eps * ramp, b)


def test_hfen_zero_reference():
    z = np.zeros((20, 20))
    with pytest.raises(ZeroDivisionError):
        M.hfen(z + np.eye(20), z)


def test_log_kernel_zero_sum():
    assert abs(M.log_kernel().sum()) < 1e-14


def test_dice_cases():
    m = np.zeros((6, 6), bool)
    m[1:3, 1:3] = True
    assert M.dice(m, m) == 1.0
    other = np.zeros_like(m)
    other[4:, 4:] = True
    assert M.dice(m, other) == 0.0
    shifted = np.roll(m, 1, axis=1)
    assert M.dice(m, shifted) == 0.5
    assert M.dice(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0
    assert M.dice(m, shifted) == M.dice(shifted, m)
    with pytest.raises(ValueError):
        M.dice(m.astype(float) * 0.5, m)


def test_folding_fixed_points():
    H = W = 12
    assert M.jacobian_fold_permille(np.zeros((2, H, W))) == 0.0
    xx = np.tile(np.arange(W, dtype=float), (H, 1))
    u = np.stack([-2.0 * xx, np.zeros((H, W))])
    assert M.jacobian_fold_permille(u) == 1000.0


def test_folding_smooth_small_flow_and_translation_invariance():
    yy, xx = np.mgrid[0:32, 0:32].astype(float)
    u = np.stack([2.0 * np.sin(xx / 8.0), 1.5 * np.cos(yy / 6.0)])   # |grad u| < 0.5
    assert M.jacobian_fold_permille(u) == 0.0
    v = np.stack([-1.2 * xx, 0.3 * yy])
    shifted = v + np.array([3.7, -2.1])[:, None, None]
    assert M.jacobian_fold_permille(v) == M.jacobian_fold_permille(shifted)
    assert np.allclose(M.jacobian_determinant(v), M.jacobian_determinant(shifted))


def test_photo_residual_matches_loss():
    rng = np.random.default_rng(4)
    f, m = rng.uniform(size=(8, 8)), rng.uniform(size=(8, 8))
    u = rng.uniform(-1, 1, (2, 8, 8))
    loss = photometric(Tensor(f[None, None]), Tensor(m[None, None]), Tensor(u[None])).item()
    assert M.photo_residual(f, m, u) == pytest.approx(loss, abs=1e-14)
    assert M.photo_residual(f, f, np.zeros_like(u)) == 0.0
    assert M.photo_residual(m + 0.1, m, np.zeros_like(u)) == pytest.approx(0.1)


def test_report_roundtrip():
    r = M.MetricReport()
    for v in (0.9, 0.8):
        r.add("ssim", v)
    r.add("fold_permille", 2.0)
    parsed = M.MetricReport.parse(r.to_text())
    assert parsed["ssim"] == pytest.approx((0.85, 0.05))
    assert parsed["fold_permille"] == (2.0, 0.0)
    assert "per-mille" in r.to_text()


def test_report_keeps_infinite_psnr():
    r = M.MetricReport()
    r.add("psnr", M.PSNR_INF)
    r.add("psnr", 30.0)
    assert M.MetricReport.parse(r.to_text())["psnr"][0] == float("inf")

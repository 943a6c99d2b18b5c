import numpy as np
import pytest

from gmareg.metrics import nrmse, ssim
from gmareg.moco import (MotionSet, ReconProblem, WarpOperator, cg_sense, motion_apply,
                         motion_apply_adjoint, motion_set_from_flows, recon_cycle, system_adjoint,
                         system_forward, window_frames)
from gmareg.mri import adjoint_cartesian, forward_cartesian, make_coil_maps, make_vista_mask
from gmareg.mri.radial import make_golden_angle, nufft_forward
from gmareg.phantom import make_cardiac_phantom
from oracles import dense_system, warp_matrix_oracle


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def flow8():
    return np.random.default_rng(0).uniform(-2.5, 2.5, (2, 8, 8))


def test_warp_zero_identity():
    x = crandn(np.random.default_rng(1), 6, 5)
    assert np.array_equal(motion_apply(x, np.zeros((2, 6, 5))), x)
    assert np.array_equal(motion_apply_adjoint(x, np.zeros((2, 6, 5))), x)


def test_warp_matches_sparse_oracle(flow8):
    x = crandn(np.random.default_rng(2), 8, 8)
    A = warp_matrix_oracle(flow8)
    assert np.max(np.abs(motion_apply(x, flow8).ravel() - A @ x.ravel())) < 1e-12
    assert np.max(np.abs(motion_apply_adjoint(x, flow8).ravel() - A.T @ x.ravel())) < 1e-12


def test_warp_linearity(flow8):
    rng = np.random.default_rng(3)
    x, y = crandn(rng, 8, 8), crandn(rng, 8, 8)
    a, b = 0.7 - 0.2j, -1.3 + 0.5j
    U = WarpOperator(flow8)
    assert np.max(np.abs(U.apply(a * x + b * y) - (a * U.apply(x) + b * U.apply(y)))) < 1e-12


def test_warp_adjoint_inner_product():
    rng = np.random.default_rng(4)
    u = rng.uniform(-3, 3, (2, 12, 10))
    x, y = crandn(rng, 12, 10), crandn(rng, 12, 10)
    U = WarpOperator(u)
    lhs, rhs = np.vdot(y, U.apply(x)), np.vdot(U.adjoint(y), x)
    assert abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)) < 1e-10


def test_warp_real_and_imag_independent(flow8):
    rng = np.random.default_rng(5)
    re, im = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
    out = motion_apply(re + 1j * im, flow8)
    assert np.allclose(out.real, motion_apply(re, flow8))
    assert np.allclose(out.imag, motion_apply(im, flow8))


def test_window_frames():
    assert window_frames(0, 2, 8, True) == (6, 7, 0, 1, 2)
    assert window_frames(0, 2, 8, False) == (0, 1, 2)
    assert window_frames(1, 6, 4, True) == (3, 0, 1, 2)
    assert window_frames(2, 0, 5, True) == (2,)
    with pytest.raises(ValueError):
        window_frames(0, -1, 4, True)


def test_motion_set_validation():
    with pytest.raises(ValueError):
        MotionSet(0, (0,), np.ones((1, 2, 4, 4)))
    with pytest.raises(ValueError):
        MotionSet(0, (0, 1), np.zeros((1, 2, 4, 4)))
    assert MotionSet(3, (1, 2, 3, 4, 5), np.zeros((5, 2, 4, 4))).T == 2


def _toy(rng, H=8, W=8, F=3, R=2.0, nc=3, motion=True):
    coils = make_coil_maps(H, W, nc)
    mask = make_vista_mask(H, F, R, seed=1).lines.T
    frames = crandn(rng, F, H, W)
    ksp = [forward_cartesian(frames[k], coils, mask[k]) for k in range(F)]
    flows = rng.uniform(-1.5, 1.5, (F, 2, H, W)) if motion else np.zeros((F, 2, H, W))
    flows[1] = 0.0
    return ReconProblem(ksp, coils, mask, MotionSet(1, (0, 1, 2), flows))


def test_window_collapse_is_cartesian_forward():
    rng = np.random.default_rng(6)
    prob = _toy(rng)
    one = ReconProblem(prob.kspace, prob.coils, prob.sampling, MotionSet(1, (1,), np.zeros((1, 2, 8, 8))))
    x = crandn(rng, 8, 8)
    assert np.array_equal(system_forward(x, one)[0], forward_cartesian(x, prob.coils, prob.sampling[1]))
    assert not any(np.any(k) for k in system_forward(np.zeros((8, 8), complex), prob))


def test_stacked_operator_adjoint():
    rng = np.random.default_rng(7)
    prob = _toy(rng)
    x = crandn(rng, 8, 8)
    y = [crandn(rng, 3, 8, 8) for _ in range(3)]
    Ex = system_forward(x, prob)
    lhs = sum(np.vdot(a, b) for a, b in zip(y, Ex))
    rhs = np.vdot(system_adjoint(y, prob), x)
    scale = np.sqrt(sum(np.linalg.norm(a) ** 2 for a in Ex)) * np.sqrt(sum(np.linalg.norm(a) ** 2 for a in y))
    assert abs(lhs - rhs) / scale < 1e-10


def test_missing_frame_rejected():
    rng = np.random.default_rng(8)
    prob = _toy(rng)
    ksp = list(prob.kspace)
    ksp[2] = None
    with pytest.raises(ValueError):
        ReconProblem(ksp, prob.coils, prob.sampling, prob.motion)


def test_cg_matches_dense_solve():
    rng = np.random.default_rng(9)
    prob = _toy(rng)
    E = dense_system(prob)
    m = np.concatenate([k.ravel() for k in prob.measured()])
    x_ref = np.linalg.solve(E.conj().T @ E, E.conj().T @ m)
    x = cg_sense(prob, max_iter=200, tol=1e-14)
    assert np.max(np.abs(x.ravel() - x_ref)) / np.max(np.abs(x_ref)) < 1e-8


def test_cg_data_residual_monotone():
    rng = np.random.default_rng(10)
    prob = _toy(rng, H=16, W=16, R=3.0)
    info = cg_sense(prob, max_iter=30, tol=1e-12, return_info=True)
    res = np.array(info.residuals)
    assert np.all(np.diff(res) <= 1e-12 * res[0])


def test_cg_fully_sampled_single_frame():
    rng = np.random.default_rng(11)
    coils = make_coil_maps(16, 16, 4)
    x = crandn(rng, 16, 16)
    full = np.ones((1, 16), bool)
    ksp = [forward_cartesian(x, coils, full[0])]
    prob = ReconProblem(ksp, coils, full, MotionSet(0, (0,), np.zeros((1, 2, 16, 16))))
    info = cg_sense(prob, return_info=True)
    assert info.iterations <= 2
    assert nrmse(np.abs(info.image), np.abs(adjoint_cartesian(ksp[0], coils, full[0]))) < 1e-6
    assert nrmse(np.abs(info.image), np.abs(x)) < 1e-6


def test_cg_linear_in_data():
    rng = np.random.default_rng(12)
    prob = _toy(rng)
    a = 2.5 - 1.5j
    scaled = ReconProblem([a * k for k in prob.kspace], prob.coils, prob.sampling, prob.motion)
    x1 = cg_sense(prob, max_iter=5, tol=0.0)
    x2 = cg_sense(scaled, max_iter=5, tol=0.0)
    assert np.max(np.abs(x2 - a * x1)) < 1e-8 * np.max(np.abs(a * x1))


def test_cg_non_finite_aborts():
    rng = np.random.default_rng(13)
    prob = _toy(rng)
    prob.kspace[1] = prob.kspace[1].copy()
    prob.kspace[1][0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="iteration"):
        cg_sense(prob)


def test_radial_problem_adjoint():
    rng = np.random.default_rng(14)
    coils = make_coil_maps(16, 16, 2)
    tr = make_golden_angle(12, 2, 32, (16, 16))
    ksp = [nufft_forward(crandn(rng, 16, 16), coils, tr.coords[k]) for k in range(2)]
    flows = np.stack([np.zeros((2, 16, 16)), rng.uniform(-1, 1, (2, 16, 16))])
    prob = ReconProblem(ksp, coils, tr, MotionSet(0, (0, 1), flows))
    x = crandn(rng, 16, 16)
    y = [crandn(rng, *k.shape) for k in ksp]
    Ex = system_forward(x, prob)
    lhs = sum(np.vdot(a, b) for a, b in zip(y, Ex))
    rhs = np.vdot(system_adjoint(y, prob), x)
    assert abs(lhs - rhs) / abs(lhs) < 1e-2


@pytest.fixture(scope="module")
def cine():
    scene = make_cardiac_phantom(64, 64, 8, seed=2)
    mask = make_vista_mask(64, 8, 4, seed=0)
    ksp = [forward_cartesian(scene.frames[k], scene.coil_maps, mask.lines[:, k]) for k in range(8)]
    return scene, mask, ksp


def test_recon_cycle_length_and_T0(cine):
    scene, mask, ksp = cine
    rec0 = recon_cycle(ksp, scene.coil_maps, mask, None, T=0, max_iter=5)
    assert rec0.shape == (8, 64, 64)
    single = cg_sense(ReconProblem(ksp, scene.coil_maps, mask, MotionSet(3, (3,), np.zeros((1, 2, 64, 64)))), max_iter=5)
    assert np.array_equal(rec0[3], single)


def test_recon_window_improves_with_true_motion(cine):
    scene, mask, ksp = cine
    ref = np.abs(scene.frames)
    score = {}
    for T in (0, 2):
        rec = np.abs(recon_cycle(ksp, scene.coil_maps, mask, scene.gt_flows, T=T, max_iter=15))
        score[T] = np.mean([ssim(rec[k], ref[k]) for k in range(8)])
    assert score[2] > score[0]


def test_motion_set_from_flows(cine):
    scene = cine[0]
    ms = motion_set_from_flows(scene.gt_flows, 0, 2, True)
    assert ms.taus == (6, 7, 0, 1, 2)
    assert np.array_equal(ms.flows[0], scene.gt_flows[0, 6])


def test_full_sampling_recovers_truth():
    scene = make_cardiac_phantom(32, 32, 4, seed=0)
    full = np.ones((4, 32), bool)
    ksp = [forward_cartesian(scene.frames[k], scene.coil_maps, full[k]) for k in range(4)]
    rec = recon_cycle(ksp, scene.coil_maps, full, None, T=0)
    for k in range(4):
        assert nrmse(np.abs(rec[k]), np.abs(scene.frames[k])) < 1e-6
    # ignoring real motion blends neighbouring frames; the true motion does not
    blurred = recon_cycle(ksp, scene.coil_maps, full, None, T=1)
    aligned = recon_cycle(ksp, scene.coil_maps, full, scene.gt_flows, T=1)
    err = lambda r: np.mean([nrmse(np.abs(r[k]), np.abs(scene.frames[k])) for k in range(4)])
    assert err(aligned) < err(blurred)

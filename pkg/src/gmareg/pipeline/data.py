"""Undersampled inputs, cropping and training-pair sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..moco import ReconProblem, MotionSet, cg_sense
from ..mri.cartesian import CartesianMask, adjoint_cartesian, forward_cartesian, make_vista_mask
from ..mri.radial import (RadialTrajectory, make_golden_angle, nufft_adjoint, nufft_forward,
                          spokes_for_acceleration)
from ..phantom import PhantomScene, make_cardiac_phantom, make_respiratory_phantom


@dataclass
class Acquisition:
    """Simulated measurement of every frame of a scene."""

    kspace: np.ndarray                 # (F, Nc, H, W) Cartesian or (F, Nc, M) radial
    sampling: object                   # CartesianMask or RadialTrajectory
    zero_filled: np.ndarray            # (F, H, W) complex A^H m
    R: float

    @property
    def radial(self) -> bool:
        return isinstance(self.sampling, RadialTrajectory)


def undersample(scene: PhantomScene, R: float, trajectory: str = "cartesian",
                seed: int = 0) -> Acquisition:
    F, (H, W) = scene.n_frames, scene.shape
    coils = scene.coil_maps
    if trajectory == "cartesian":
        mask = make_vista_mask(H, F, R, seed=seed)
        ksp = np.stack([forward_cartesian(scene.frames[t], coils, mask.lines[:, t]) for t in range(F)])
        zf = np.stack([adjoint_cartesian(ksp[t], coils, mask.lines[:, t]) for t in range(F)])
        return Acquisition(ksp, mask, zf, float(R))
    if trajectory == "radial":
        traj = make_golden_angle(spokes_for_acceleration(R, max(H, W)), F, 2 * max(H, W), (H, W))
        ksp = np.stack([nufft_forward(scene.frames[t], coils, traj.coords[t]) for t in range(F)])
        zf = np.stack([nufft_adjoint(ksp[t], coils, traj.coords[t], traj.dcf[t]) for t in range(F)])
        return Acquisition(ksp, traj, zf, float(R))
    raise ValueError(f"unknown trajectory {trajectory!r}")


def sense_frames(acq: Acquisition, coils: np.ndarray, max_iter: int = 10) -> np.ndarray:
    """Per-frame CG-SENSE without motion; inputs of the warm-start variant."""
    F = acq.kspace.shape[0]
    sampling = acq.sampling.lines.T if isinstance(acq.sampling, CartesianMask) else acq.sampling
    out = np.empty_like(acq.zero_filled)
    for t in range(F):
        prob = ReconProblem(list(acq.kspace), coils, sampling,
                            MotionSet(t, (t,), np.zeros((1, 2) + coils.shape[-2:])))
        out[t] = cg_sense(prob, max_iter=max_iter)
    return out


def scale_unit(frames: np.ndarray) -> np.ndarray:
    """Map magnitudes of a sequence affinely onto [-1, 1] (shared min/max)."""
    mag = np.abs(frames).astype(np.float64)
    lo, hi = mag.min(), mag.max()
    if hi == lo:
        return np.zeros_like(mag)
    return np.clip(2.0 * (mag - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def center_crop(x: np.ndarray, size: int) -> np.ndarray:
    """Crop the last two axes to ``size x size`` about the centre."""
    H, W = x.shape[-2:]
    if size > H or size > W:
        raise ValueError(f"crop {size} larger than image {H}x{W}")
    y0, x0 = (H - size) // 2, (W - size) // 2
    return x[..., y0:y0 + size, x0:x0 + size]


def zero_pad(x: np.ndarray, shape: tuple) -> np.ndarray:
    """Inverse of :func:`center_crop`: embed in zeros of ``shape`` (last two axes)."""
    h, w = x.shape[-2:]
    H, W = shape
    if h > H or w > W:
        raise ValueError(f"cannot pad {h}x{w} into {H}x{W}")
    out = np.zeros(x.shape[:-2] + (H, W), dtype=x.dtype)
    y0, x0 = (H - h) // 2, (W - w) // 2
    out[..., y0:y0 + h, x0:x0 + w] = x
    return out


def resample(img: np.ndarray, shape: tuple) -> np.ndarray:
    """Bilinear resampling of a 2-D image onto ``shape`` with pixel centres aligned."""
    H, W = img.shape
    if (H, W) == tuple(shape):
        return img
    return ndimage.zoom(img, (shape[0] / H, shape[1] / W), order=1, grid_mode=True, mode="nearest")


def resample_flow(u: np.ndarray, shape: tuple) -> np.ndarray:
    """Resample a (2, h, w) flow onto ``shape``; displacements are rescaled to the new pixel size."""
    h, w = u.shape[-2:]
    return np.stack([resample(u[0], shape) * (shape[1] / w), resample(u[1], shape) * (shape[0] / h)])


def neighbor_frames(t: int, n_frames: int, cyclic: bool) -> tuple:
    if cyclic:
        return (t - 1) % n_frames, (t + 1) % n_frames
    return max(t - 1, 0), min(t + 1, n_frames - 1)


@dataclass
class TrainPair:
    fixed: np.ndarray                  # network inputs, [-1, 1]
    moving: np.ndarray
    neighbors: tuple
    fixed_full: np.ndarray             # fully sampled loss targets, [-1, 1]
    moving_full: np.ndarray
    context_full: np.ndarray           # (3, H, W): fixed and its two neighbours
    t: int
    tau: int


def make_pair(inputs: np.ndarray, full: np.ndarray, t: int, tau: int, cyclic: bool) -> TrainPair:
    """Registration pair taking fixed frame ``t`` to moving frame ``tau``."""
    p, n = neighbor_frames(t, len(full), cyclic)
    return TrainPair(inputs[t], inputs[tau], (inputs[p], inputs[n]), full[t], full[tau],
                     np.stack([full[t], full[p], full[n]]), t, tau)


def pair_sampler(scene: PhantomScene, seed: int, inputs: np.ndarray | None = None):
    """Endless stream of uniformly drawn ordered frame pairs.

    ``inputs`` are the (possibly undersampled) frames the network sees; they
    default to the fully sampled frames.
    """
    F = scene.n_frames
    if F < 3:
        raise ValueError(f"pair sampling needs at least 3 frames, got {F}")
    full = scale_unit(scene.frames)
    net_in = full if inputs is None else scale_unit(inputs)
    rng = np.random.default_rng(seed)
    while True:
        t = int(rng.integers(F))
        tau = int(rng.integers(F - 1))
        tau += tau >= t
        yield make_pair(net_in, full, t, tau, scene.cyclic)


def make_scene(kind: str, size: int, frames: int, seed: int) -> PhantomScene:
    if kind == "cardiac":
        return make_cardiac_phantom(size, size, frames, seed=seed)
    if kind == "respiratory":
        return make_respiratory_phantom(size, size, frames, seed=seed)
    raise ValueError(f"unknown phantom kind {kind!r}")


@dataclass
class Sequence:
    """One scene at one acceleration, already scaled for the network."""

    scene: PhantomScene
    R: float
    inputs: np.ndarray                 # (F, h, w) in [-1, 1]
    full: np.ndarray                   # (F, h, w) in [-1, 1]


def build_corpus(kind: str, size: int, frames: int, n_scenes: int, Rs, seed: int,
                 trajectory: str = "cartesian", crop: int = 0, warm_start: bool = False) -> list:
    """Scenes with seeds ``seed .. seed + n_scenes - 1``, each undersampled at every R."""
    corpus = []
    for i in range(n_scenes):
        scene = make_scene(kind, size, frames, seed + i)
        full = scale_unit(scene.frames)
        for j, R in enumerate(Rs):
            if R == 1:
                inputs = full
            else:
                acq = undersample(scene, R, trajectory, seed=1000 * (seed + i) + j)
                imgs = sense_frames(acq, scene.coil_maps) if warm_start else acq.zero_filled
                inputs = scale_unit(imgs)
            net_in, tgt = (center_crop(inputs, crop), center_crop(full, crop)) if crop else (inputs, full)
            corpus.append(Sequence(scene, float(R), net_in, tgt))
    return corpus


def sample_batch(corpus: list, rng: np.random.Generator, batch: int) -> list:
    pairs = []
    for _ in range(batch):
        seq = corpus[int(rng.integers(len(corpus)))]
        F = len(seq.full)
        t = int(rng.integers(F))
        tau = int(rng.integers(F - 1))
        tau += tau >= t
        pairs.append(make_pair(seq.inputs, seq.full, t, tau, seq.scene.cyclic))
    return pairs


def stack_pairs(pairs: list, dtype=np.float32) -> dict:
    """Batch arrays shaped for :func:`gmareg.regnet.register` and the loss."""
    def st(get):
        return np.stack([get(p) for p in pairs])[:, None].astype(dtype)
    return {
        "fixed": st(lambda p: p.fixed),
        "moving": st(lambda p: p.moving),
        "prev": st(lambda p: p.neighbors[0]),
        "next": st(lambda p: p.neighbors[1]),
        "fixed_full": st(lambda p: p.fixed_full),
        "moving_full": st(lambda p: p.moving_full),
        "context_full": np.stack([p.context_full for p in pairs]).astype(dtype),
    }

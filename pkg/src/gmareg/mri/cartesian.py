"""Cartesian multi-coil operators and the variable-density spatiotemporal mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fft import fft2c, ifft2c

N_CENTER_LINES = 4


@dataclass(frozen=True)
class CartesianMask:
    """Sampled phase-encode lines, ``lines[ky, frame]``; every k_x readout is acquired."""

    lines: np.ndarray
    requested_R: float

    @property
    def n_ky(self) -> int:
        return self.lines.shape[0]

    @property
    def frames(self) -> int:
        return self.lines.shape[1]

    @property
    def achieved_R(self) -> float:
        return self.lines.size / max(int(self.lines.sum()), 1)

    def frame(self, t: int, width: int) -> np.ndarray:
        """Boolean (ky, kx) mask for frame ``t``."""
        return np.repeat(self.lines[:, t][:, None], width, axis=1)


def _as_mask2d(mask: np.ndarray, shape: tuple) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = np.repeat(mask[:, None], shape[-1], axis=1)
    if mask.shape != shape[-2:]:
        raise ValueError(f"mask shape {mask.shape} does not match image {shape[-2:]}")
    return mask


def forward_cartesian(img: np.ndarray, coils: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """A = M F S: image (H, W) -> masked coil k-space (Nc, H, W)."""
    if coils.shape[-2:] != img.shape[-2:]:
        raise ValueError(f"coil maps {coils.shape} do not match image {img.shape}")
    m = _as_mask2d(mask, img.shape)
    return fft2c(coils * img[None]) * m


def adjoint_cartesian(ksp: np.ndarray, coils: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """A^H = S^H F^H M: coil k-space -> zero-filled coil-combined image."""
    if ksp.shape != coils.shape:
        raise ValueError(f"k-space {ksp.shape} does not match coil maps {coils.shape}")
    m = _as_mask2d(mask, ksp.shape)
    return (np.conj(coils) * ifft2c(ksp * m)).sum(axis=0)


def make_vista_mask(n_ky: int, frames: int, R: float, seed: int = 0,
                    repeat_penalty: float = 0.05) -> CartesianMask:
    """Seeded variable-density, temporally incoherent Cartesian line pattern.

    Four central lines are always sampled. The remaining lines of each frame
    are drawn without replacement from a Gaussian density (sigma = n_ky / 6)
    whose weight is cut by ``repeat_penalty`` for lines used in the previous
    frame, so adjacent frames overlap as little as the density allows.
    """
    if R < 1:
        raise ValueError(f"acceleration R must be >= 1, got {R}")
    total = int(round(n_ky * frames / R))
    if total < N_CENTER_LINES * frames:
        raise ValueError(f"R={R} infeasible: {n_ky} lines x {frames} frames leaves fewer than "
                         f"{N_CENTER_LINES} centre lines per frame")
    if total >= n_ky * frames:
        return CartesianMask(np.ones((n_ky, frames), dtype=bool), float(R))
    rng = np.random.default_rng(seed)
    per_frame = np.full(frames, total // frames)
    per_frame[rng.permutation(frames)[: total - per_frame.sum()]] += 1
    centre = np.arange(n_ky // 2 - N_CENTER_LINES // 2, n_ky // 2 + N_CENTER_LINES // 2)
    ky = np.arange(n_ky)
    density = np.exp(-((ky - n_ky / 2) ** 2) / (2 * (n_ky / 6) ** 2))
    density[centre] = 0.0
    lines = np.zeros((n_ky, frames), dtype=bool)
    prev = np.zeros(n_ky, dtype=bool)
    for t in range(frames):
        lines[centre, t] = True
        extra = min(per_frame[t] - N_CENTER_LINES, n_ky - N_CENTER_LINES)
        if extra > 0:
            w = density * np.where(prev, repeat_penalty, 1.0)
            pick = rng.choice(n_ky, size=extra, replace=False, p=w / w.sum())
            lines[pick, t] = True
        prev = lines[:, t] & ~np.isin(ky, centre)
    return CartesianMask(lines, float(R))

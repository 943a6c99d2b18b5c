"""Golden-angle radial sampling and a Kaiser-Bessel gridding NUFFT.

k-space coordinates are in cycles/pixel, stored as (k_y, k_x) pairs in
[-0.5, 0.5). Image pixel (y, x) sits at position (y - H/2, x - W/2), which
makes samples that fall on the Cartesian grid agree with :func:`fft2c`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

GOLDEN_ANGLE_DEG = 180.0 * (np.sqrt(5.0) - 1.0) / 2.0  # 111.246...
OVERSAMPLING = 2
KERNEL_WIDTH = 4


@dataclass(frozen=True)
class RadialTrajectory:
    angles: np.ndarray        # (frames, spokes) radians in [0, pi)
    samples_per_spoke: int
    coords: np.ndarray        # (frames, spokes * samples, 2) as (k_y, k_x)
    dcf: np.ndarray           # (frames, spokes * samples)

    @property
    def frames(self) -> int:
        return self.angles.shape[0]

    @property
    def spokes_per_frame(self) -> int:
        return self.angles.shape[1]


def nyquist_spokes(n: int) -> float:
    return np.pi / 2 * n


def radial_acceleration(spokes_per_frame: int, n: int) -> float:
    return nyquist_spokes(n) / spokes_per_frame


def spokes_for_acceleration(R: float, n: int) -> int:
    return max(1, int(round(nyquist_spokes(n) / R)))


def make_golden_angle(spokes_per_frame: int, frames: int, samples_per_spoke: int,
                      image_shape: tuple | None = None) -> RadialTrajectory:
    """Spoke i (counted continuously across frames) sits at i x 111.246 deg mod 180."""
    if spokes_per_frame < 1:
        raise ValueError("need at least one spoke per frame")
    i = np.arange(spokes_per_frame * frames).reshape(frames, spokes_per_frame)
    angles = np.deg2rad(np.mod(i * GOLDEN_ANGLE_DEG, 180.0))
    r = (np.arange(samples_per_spoke) - samples_per_spoke / 2) / samples_per_spoke
    ky = np.sin(angles)[..., None] * r
    kx = np.cos(angles)[..., None] * r
    coords = np.stack([ky, kx], axis=-1).reshape(frames, -1, 2)
    if image_shape is None:
        image_shape = (samples_per_spoke, samples_per_spoke)
    traj = RadialTrajectory(angles, samples_per_spoke, coords, np.ones(coords.shape[:2]))
    return RadialTrajectory(angles, samples_per_spoke, coords, dcf_ramp(traj, image_shape))


def dcf_ramp(traj: RadialTrajectory, image_shape: tuple) -> np.ndarray:
    """Ramp density compensation, floored at half the radial sample spacing.

    Each weight approximates the k-space area a sample represents, in units
    of one Cartesian grid cell, so the adjoint with these weights is a
    Riemann sum of the inverse transform.
    """
    H, W = image_shape
    dk = 1.0 / traj.samples_per_spoke
    kabs = np.sqrt((traj.coords ** 2).sum(axis=-1))
    return H * W * dk * np.pi * np.maximum(kabs, dk / 2) / traj.spokes_per_frame


def kaiser_bessel_beta(width: int = KERNEL_WIDTH, osf: float = OVERSAMPLING) -> float:
    """Beatty et al. (2005) shape parameter."""
    return np.pi * np.sqrt((width / osf) ** 2 * (osf - 0.5) ** 2 - 0.8)


def _kb(d: np.ndarray, beta: float) -> np.ndarray:
    half = KERNEL_WIDTH / 2
    inside = np.abs(d) <= half
    arg = np.sqrt(np.clip(1.0 - (d / half) ** 2, 0.0, None))
    return np.where(inside, np.i0(beta * arg), 0.0)


def _deapodization(n: int, grid: int, beta: float) -> np.ndarray:
    pos = np.arange(n) - n / 2
    taps = np.arange(-2, 3)
    return (_kb(taps.astype(float), beta)[:, None] * np.cos(2 * np.pi * taps[:, None] * pos / grid)).sum(0)


class GriddingNufft:
    """Single-coil type-2 NUFFT (image -> samples) and its exact adjoint."""

    def __init__(self, image_shape: tuple, coords: np.ndarray):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must be (M, 2), got {coords.shape}")
        if np.any(coords < -0.5) or np.any(coords >= 0.5 + 1e-12):
            raise ValueError("trajectory coordinates must lie in [-0.5, 0.5)")
        self.shape = tuple(image_shape)
        H, W = self.shape
        self.grid = (OVERSAMPLING * H, OVERSAMPLING * W)
        Gy, Gx = self.grid
        beta = kaiser_bessel_beta()
        gy = coords[:, 0] * Gy + Gy / 2
        gx = coords[:, 1] * Gx + Gx / 2
        offs = np.arange(-2, 3)
        ny = np.round(gy)[:, None] + offs
        nx = np.round(gx)[:, None] + offs
        wy = _kb(gy[:, None] - ny, beta)
        wx = _kb(gx[:, None] - nx, beta)
        M = coords.shape[0]
        rows = np.repeat(np.arange(M), 25)
        cols = ((ny.astype(np.int64) % Gy)[:, :, None] * Gx + (nx.astype(np.int64) % Gx)[:, None, :]).ravel()
        vals = (wy[:, :, None] * wx[:, None, :]).ravel()
        keep = vals != 0
        self.interp = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(M, Gy * Gx))
        self.interp_h = self.interp.T.tocsr()
        self.apod = np.outer(_deapodization(H, Gy, beta), _deapodization(W, Gx, beta))
        self.scale = 1.0 / np.sqrt(H * W)
        self.n_samples = M

    def _pad(self, img):
        H, W = self.shape
        Gy, Gx = self.grid
        out = np.zeros(img.shape[:-2] + self.grid, dtype=np.complex128)
        y0, x0 = (Gy - H) // 2, (Gx - W) // 2
        out[..., y0:y0 + H, x0:x0 + W] = img
        return out

    def _crop(self, grid):
        H, W = self.shape
        Gy, Gx = self.grid
        y0, x0 = (Gy - H) // 2, (Gx - W) // 2
        return grid[..., y0:y0 + H, x0:x0 + W]

    def forward(self, img: np.ndarray) -> np.ndarray:
        """(..., H, W) -> (..., M)."""
        lead = img.shape[:-2]
        p = self._pad(img / self.apod)
        Y = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(p, axes=(-2, -1))), axes=(-2, -1))
        Y = Y.reshape(-1, self.grid[0] * self.grid[1])
        out = (self.interp @ Y.T).T * self.scale
        return out.reshape(lead + (self.n_samples,))

    def adjoint(self, samples: np.ndarray) -> np.ndarray:
        """(..., M) -> (..., H, W); exact adjoint of :meth:`forward`."""
        lead = samples.shape[:-1]
        s = samples.reshape(-1, self.n_samples)
        g = (self.interp_h @ s.T).T.reshape((-1,) + self.grid)
        Gy, Gx = self.grid
        img = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(g, axes=(-2, -1))), axes=(-2, -1)) * (Gy * Gx)
        img = self._crop(img) / self.apod * self.scale
        return img.reshape(lead + self.shape)


_CACHE: dict = {}


def get_nufft(image_shape: tuple, coords: np.ndarray) -> GriddingNufft:
    key = (tuple(image_shape), coords.shape, hash(np.ascontiguousarray(coords).tobytes()))
    op = _CACHE.get(key)
    if op is None:
        if len(_CACHE) > 64:
            _CACHE.clear()
        op = _CACHE[key] = GriddingNufft(image_shape, coords)
    return op


def nufft_forward(img: np.ndarray, coils: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Coil-weighted NUFFT: image (H, W) -> samples (Nc, M)."""
    if coils.shape[-2:] != img.shape[-2:]:
        raise ValueError(f"coil maps {coils.shape} do not match image {img.shape}")
    return get_nufft(img.shape[-2:], coords).forward(coils * img[None])


def nufft_adjoint(ksp: np.ndarray, coils: np.ndarray, coords: np.ndarray,
                  dcf: np.ndarray | None = None) -> np.ndarray:
    """Density-compensated adjoint NUFFT and coil combination: (Nc, M) -> (H, W).

    Pass ``dcf=None`` for the plain adjoint of :func:`nufft_forward`.
    """
    op = get_nufft(coils.shape[-2:], coords)
    if dcf is not None:
        ksp = ksp * dcf
    return (np.conj(coils) * op.adjoint(ksp)).sum(axis=0)

"""Simulated receive-coil sensitivities."""
import numpy as np


def make_coil_maps(H: int, W: int, n_coils: int = 8, width: float = 0.45) -> np.ndarray:
    """Smooth complex Gaussian sensitivities centred on a ring around the FOV.

    Returns ``(n_coils, H, W)`` maps whose root-sum-of-squares is 1 at every
    pixel.
    """
    yy, xx = np.meshgrid((np.arange(H) - H / 2) / H, (np.arange(W) - W / 2) / W, indexing="ij")
    maps = np.empty((n_coils, H, W), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2 * np.pi * c / n_coils
        cy, cx = 0.55 * np.sin(ang), 0.55 * np.cos(ang)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        phase = ang + 2.0 * (xx * np.cos(ang) + yy * np.sin(ang))
        maps[c] = mag * np.exp(1j * phase)
    rss = np.sqrt((np.abs(maps) ** 2).sum(axis=0))
    return maps / rss


def rss(x: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.sqrt((np.abs(x) ** 2).sum(axis=axis))

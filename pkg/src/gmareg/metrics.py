"""Image-quality and registration metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

PSNR_INF = float("inf")


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    k = win.shape[0]
    out = ndimage.correlate(img, win, mode="constant")
    r = k // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim(a: np.ndarray, b: np.ndarray, data_range: float | None = None,
         win_size: int = 11, sigma: float = 1.5, K1: float = 0.01, K2: float = 0.03) -> float:
    """Mean SSIM over all fully contained Gaussian windows.

    ``data_range`` defaults to the reference span ``max(b) - min(b)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes {a.shape} and {b.shape} differ")
    L = float(b.max() - b.min()) if data_range is None else float(data_range)
    if L == 0.0:
        if np.array_equal(a, b):
            return 1.0
        L = 1e-12
    win = _gaussian_window(win_size, sigma)
    C1, C2 = (K1 * L) ** 2, (K2 * L) ** 2
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    saa = _filter_valid(a * a, win) - mu_a ** 2
    sbb = _filter_valid(b * b, win) - mu_b ** 2
    sab = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * sab + C2)
    den = (mu_a ** 2 + mu_b ** 2 + C1) * (saa + sbb + C2)
    return float(np.mean(num / den))


def _data_range(b: np.ndarray) -> float:
    return float(np.max(b) - np.min(b))


def nrmse(a: np.ndarray, b: np.ndarray) -> float:
    """RMSE normalised by the reference span ``max(b) - min(b)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    span = _data_range(b)
    if rmse == 0.0:
        return 0.0
    return rmse / span if span > 0 else float("inf")


def psnr(a: np.ndarray, b: np.ndarray, data_range: float | None = None) -> float:
    """10 log10(peak^2 / MSE) with peak = reference span; identical images give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    peak = _data_range(b) if data_range is None else float(data_range)
    return 10.0 * np.log10(peak ** 2 / mse)


def log_kernel(size: int = 15, sigma: float = 1.5) -> np.ndarray:
    """Zero-sum Laplacian-of-Gaussian kernel."""
    ax = np.arange(size) - (size - 1) / 2
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    r2 = xx ** 2 + yy ** 2
    g = np.exp(-r2 / (2 * sigma ** 2))
    g /= g.sum()
    k = g * (r2 - 2 * sigma ** 2) / sigma ** 4
    return k - k.mean()


def hfen(a: np.ndarray, b: np.ndarray) -> float:
    """||LoG(a) - LoG(b)|| / ||LoG(b)||."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"hfen: shapes {a.shape} and {b.shape} differ")
    k = log_kernel()
    la = ndimage.convolve(a, k, mode="reflect")
    lb = ndimage.convolve(b, k, mode="reflect")
    den = np.linalg.norm(lb)
    num = np.linalg.norm(la - lb)
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise ZeroDivisionError("hfen: reference has no high-frequency content")
    return float(num / den)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    for m in (a, b):
        if m.dtype != bool and not np.isin(m, (0, 1)).all():
            raise ValueError("dice: masks must be binary")
    a, b = a.astype(bool), b.astype(bool)
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * (a & b).sum() / denom)


def jacobian_determinant(u: np.ndarray) -> np.ndarray:
    """det d(x + u)/dx by forward differences; shape (H-1, W-1)."""
    u = np.asarray(u, dtype=np.float64)
    ux, uy = u[0], u[1]
    dux_dx = ux[:-1, 1:] - ux[:-1, :-1]
    dux_dy = ux[1:, :-1] - ux[:-1, :-1]
    duy_dx = uy[:-1, 1:] - uy[:-1, :-1]
    duy_dy = uy[1:, :-1] - uy[:-1, :-1]
    return (1 + dux_dx) * (1 + duy_dy) - dux_dy * duy_dx


def jacobian_fold_permille(u: np.ndarray) -> float:
    """Per-mille of interior pixels whose deformation Jacobian determinant is <= 0."""
    det = jacobian_determinant(u)
    return 1000.0 * float((det <= 0).sum()) / det.size


def photo_residual(fixed: np.ndarray, moving: np.ndarray, u: np.ndarray) -> float:
    """Mean absolute difference between ``fixed`` and ``moving`` warped by ``u``."""
    from .losses import warp_numpy
    return float(np.mean(np.abs(np.asarray(fixed) - warp_numpy(moving, u))))


@dataclass
class MetricReport:
    """Per-metric sample lists; serialised as ``name mean std`` lines."""

    values: dict = field(default_factory=dict)

    def add(self, name: str, value: float) -> None:
        self.values.setdefault(name, []).append(float(value))

    def summary(self) -> dict:
        out = {}
        for k, v in self.values.items():
            arr = np.asarray(v, dtype=np.float64)
            finite = arr[np.isfinite(arr)]
            if finite.size == arr.size:
                out[k] = (float(arr.mean()), float(arr.std()))
            else:
                out[k] = (float(arr.mean()), float(finite.std()) if finite.size else 0.0)
        return out

    def to_text(self) -> str:
        lines = ["# metric mean std  (fold_permille in per-mille)"]
        for k, (m, s) in self.summary().items():
            lines.append(f"{k} {m:.10g} {s:.10g}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text: str) -> dict:
        out = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, mean, std = line.split()
            out[name] = (float(mean), float(std))
        return out

"""Self-supervised registration objective.

All reductions are means so the default weights carry over across image
sizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class LossConfig:
    N: int = 12
    delta: float = 0.5
    beta: float = 0.8
    gamma: float = 0.2

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.delta < 0 or self.gamma < 0:
            raise ValueError("delta and gamma must be non-negative")


_GRIDS: dict = {}


def identity_grid(B: int, H: int, W: int, dtype=np.float64) -> np.ndarray:
    key = (B, H, W, np.dtype(dtype).str)
    g = _GRIDS.get(key)
    if g is None:
        yy, xx = np.meshgrid(np.arange(H, dtype=dtype), np.arange(W, dtype=dtype), indexing="ij")
        g = _GRIDS[key] = np.ascontiguousarray(np.broadcast_to(np.stack([xx, yy], -1), (B, H, W, 2)))
    return g


def warp(moving: Tensor, u: Tensor) -> Tensor:
    """Sample ``moving[B,C,H,W]`` at ``x + u(x)``; ``u`` is ``[B,2,H,W]`` (x, y) in pixels."""
    B, _, H, W = moving.shape
    if u.shape != (B, 2, H, W):
        raise ValueError(f"warp: flow {u.shape} does not match image {moving.shape}")
    coords = T.add(T.transpose(u, (0, 2, 3, 1)), identity_grid(B, H, W, u.dtype))
    return T.bilinear_sample(moving, coords)


def warp_numpy(img: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Bilinear warp of a real 2-D array by a (2, H, W) flow, outside any tape."""
    img = np.asarray(img, dtype=np.float64)
    with T.no_grad():
        out = warp(Tensor(img[None, None]), Tensor(np.asarray(u, dtype=np.float64)[None]))
    return out.data[0, 0]


def photometric(fixed: Tensor, moving: Tensor, u: Tensor) -> Tensor:
    """Mean |fixed - warp(moving, u)|."""
    return T.mean(T.abs(T.sub(fixed, warp(moving, u))))


def smoothness(u: Tensor) -> Tensor:
    """Forward-difference L1 smoothness: sum over the two directions of the
    mean |difference| over batch, both flow components and valid pixels.
    The last row/column (no forward neighbour) is dropped."""
    dx = T.sub(u[:, :, :, 1:], u[:, :, :, :-1])
    dy = T.sub(u[:, :, 1:, :], u[:, :, :-1, :])
    return T.add(T.mean(T.abs(dx)), T.mean(T.abs(dy)))


def denoiser_loss(denoised: Tensor, target: Tensor) -> Tensor:
    if denoised.shape != target.shape:
        raise ValueError(f"denoiser_loss: shapes {denoised.shape} and {target.shape} differ")
    return T.mean(T.square(T.sub(denoised, target)))


def iteration_weights(N: int, beta: float) -> np.ndarray:
    """Weight beta^(N - i) for iterations i = 1..N."""
    return np.array([beta ** (N - i) for i in range(1, N + 1)])


def final_loss(flows, fixed: Tensor, moving: Tensor, denoised: Tensor | None,
               context_full: Tensor | None, cfg: LossConfig = LossConfig(),
               return_parts: bool = False):
    """delta * L_den + sum_i beta^(N-i) (L_photo,i + gamma * L_smooth,i).

    ``denoised`` may be None for model variants without a denoiser branch.
    """
    if len(flows) != cfg.N:
        raise ValueError(f"final_loss: got {len(flows)} flows for N={cfg.N}")
    weights = iteration_weights(cfg.N, cfg.beta)
    total = None
    parts = {"photo": [], "smooth": [], "denoiser": 0.0}
    for w, u in zip(weights, flows):
        lp = photometric(fixed, moving, u)
        ls = smoothness(u)
        parts["photo"].append(lp.item())
        parts["smooth"].append(ls.item())
        term = T.mul(T.add(lp, T.mul(ls, cfg.gamma)), float(w))
        total = term if total is None else T.add(total, term)
    if denoised is not None and cfg.delta:
        ld = denoiser_loss(denoised, context_full)
        parts["denoiser"] = ld.item()
        total = T.add(total, T.mul(ld, cfg.delta))
    return (total, parts) if return_parts else total

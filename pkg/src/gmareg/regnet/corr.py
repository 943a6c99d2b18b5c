"""All-pairs correlation pyramid and the local lookup operator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from ..losses import identity_grid


@dataclass
class CorrelationPyramid:
    """Level l is a tensor [B*H*W, 1, H/2^l, W/2^l]: one response map per fixed-image pixel."""

    levels: list
    batch: int
    height: int
    width: int

    def level_array(self, l: int) -> np.ndarray:
        lv = self.levels[l].data
        return lv.reshape(self.batch, self.height, self.width, *lv.shape[-2:])


def _level_sizes(H: int, W: int, n_levels: int) -> list:
    sizes = [(H, W)]
    for _ in range(1, n_levels):
        h, w = sizes[-1]
        sizes.append((max(h // 2, 1), max(w // 2, 1)))
    return sizes


def build_pyramid(f_fixed: Tensor, f_moving: Tensor, n_levels: int = 4) -> CorrelationPyramid:
    """Scaled dot products between all feature-vector pairs, then repeated 2x2 average pooling.

    Pooling floors odd sizes (the last row/column is dropped), and a map that
    has reached 1 pixel along an axis is kept as is, so small inputs still
    give ``n_levels`` levels. On power-of-two maps level l equals direct
    pooling by 2^l.
    """
    if f_fixed.shape != f_moving.shape:
        raise ValueError(f"build_pyramid: feature shapes {f_fixed.shape} and {f_moving.shape} differ")
    B, D, H, W = f_fixed.shape
    a = T.transpose(T.reshape(f_fixed, (B, D, H * W)), (0, 2, 1))
    b = T.reshape(f_moving, (B, D, H * W))
    vol = T.mul(T.matmul(a, b), 1.0 / np.sqrt(D))
    vol = T.reshape(vol, (B * H * W, 1, H, W))
    levels = [vol]
    for h, w in _level_sizes(H, W, n_levels)[1:]:
        prev = levels[-1]
        kh, kw = (1 if n == m else 2 for n, m in zip(prev.shape[-2:], (h, w)))   # 1 once an axis is a single pixel
        x = T.reshape(prev[..., :h * kh, :w * kw], (B * H * W, 1, h, kh, w, kw))
        levels.append(T.mean(x, axis=(3, 5)))
    return CorrelationPyramid(levels, B, H, W)


def pyramid_nbytes(H: int, W: int, n_levels: int = 4, itemsize: int = 8, batch: int = 1) -> int:
    """(HW) x (sum of level sizes) entries, times the element size."""
    return batch * sum(H * W * h * w for h, w in _level_sizes(H, W, n_levels)) * itemsize


def _offsets(r: int, dtype) -> np.ndarray:
    d = np.arange(-r, r + 1, dtype=dtype)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    return np.stack([dx, dy], axis=-1)[None]  # (1, K, K, 2) as (x, y)


def lookup(pyr: CorrelationPyramid, flow: Tensor, radius: int = 4) -> Tensor:
    """Sample a (2r+1)^2 window around (p + flow(p)) / 2^l from every level.

    Output is [B, L * (2r+1)^2, H, W]; within a level, tap (a, b) has offset
    (dy, dx) = (a - r, b - r) and channel index a * (2r+1) + b.
    """
    B, H, W = pyr.batch, pyr.height, pyr.width
    if flow.shape != (B, 2, H, W):
        raise ValueError(f"lookup: flow {flow.shape} does not match pyramid ({B}, 2, {H}, {W})")
    K = 2 * radius + 1
    centre = T.add(T.transpose(flow, (0, 2, 3, 1)), identity_grid(B, H, W, flow.dtype))
    centre = T.reshape(centre, (B * H * W, 1, 1, 2))
    offs = _offsets(radius, flow.dtype)
    out = []
    for l, vol in enumerate(pyr.levels):
        c = T.mul(centre, 1.0 / 2 ** l)
        coords = T.add(T.expand(c, (B * H * W, K, K, 2)), np.broadcast_to(offs, (B * H * W, K, K, 2)))
        s = T.bilinear_sample(vol, coords)
        out.append(T.transpose(T.reshape(s, (B, H, W, K * K)), (0, 3, 1, 2)))
    return T.concat(out, axis=1)

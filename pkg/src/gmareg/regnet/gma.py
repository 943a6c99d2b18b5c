"""Global motion aggregation: single-head attention over fixed-image context."""
import numpy as np

from .. import tensor as T
from ..tensor import Tensor


def gma_attention(x: Tensor, w_q: Tensor, w_k: Tensor) -> Tensor:
    """Softmax over j of (W_Q x_i) . (W_K x_j) / sqrt(D_c); x is [B, HW, D_c]."""
    dc = x.shape[-1]
    if w_q.shape != (dc, dc) or w_k.shape != (dc, dc):
        raise ValueError(f"gma: projections {w_q.shape}, {w_k.shape} do not match context dim {dc}")
    q = T.matmul(x, T.transpose(w_q, (1, 0)))
    k = T.matmul(x, T.transpose(w_k, (1, 0)))
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dc))
    return T.softmax_lastdim(scores)


def gma_apply(attn: Tensor, y: Tensor, w_v: Tensor, alpha: Tensor) -> Tensor:
    """y_hat = y + alpha * attn @ (y W_V^T); y is [B, HW, D_m]."""
    dm = y.shape[-1]
    if w_v.shape != (dm, dm):
        raise ValueError(f"gma: value projection {w_v.shape} does not match motion dim {dm}")
    if attn.shape[-1] != y.shape[-2]:
        raise ValueError(f"gma: attention {attn.shape} does not match motion rows {y.shape}")
    v = T.matmul(y, T.transpose(w_v, (1, 0)))
    return T.add(y, T.mul(T.matmul(attn, v), alpha))


def gma_aggregate(x: Tensor, y: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor, alpha: Tensor) -> Tensor:
    if x.shape[:-1] != y.shape[:-1]:
        raise ValueError(f"gma: context rows {x.shape} and motion rows {y.shape} differ")
    return gma_apply(gma_attention(x, w_q, w_k), y, w_v, alpha)


def to_rows(t: Tensor) -> Tensor:
    """[B, C, H, W] -> [B, HW, C]."""
    B, C, H, W = t.shape
    return T.transpose(T.reshape(t, (B, C, H * W)), (0, 2, 1))


def from_rows(t: Tensor, H: int, W: int) -> Tensor:
    B, _, C = t.shape
    return T.reshape(T.transpose(t, (0, 2, 1)), (B, C, H, W))

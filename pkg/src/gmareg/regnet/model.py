"""End-to-end registration: encoders, correlation pyramid, GMA and iterative updates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from .config import NetConfig
from .corr import build_pyramid, lookup
from .denoiser import denoise, unet_denoise
from .encoders import context_encode, feature_encode
from .gma import from_rows, gma_apply, gma_attention, to_rows
from .update import flow_head, gru_cell, lstm_cell, motion_encode

UPSAMPLE = 8


def upsample_flow(flow: Tensor, factor: int = UPSAMPLE) -> Tensor:
    """Bilinear upsampling with displacement values scaled by ``factor``."""
    return T.mul(T.resize_bilinear(flow, factor), float(factor))


@dataclass
class RegistrationOutput:
    flows: list                       # N full-resolution flows [B, 2, 8H, 8W]
    denoised: Tensor | None           # [B, 3, 8H, 8W] or None without a denoiser
    coarse_flows: list                # N flows at 1/8 resolution


def _as_input(x) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    if t.ndim == 2:
        t = T.reshape(t, (1, 1) + t.shape)
    elif t.ndim == 3:
        t = T.reshape(t, (t.shape[0], 1) + t.shape[1:])
    return t


def register(weights: dict, fixed, moving, neighbors, cfg: NetConfig = NetConfig(),
             N: int = 12) -> RegistrationOutput:
    """Estimate N successively refined flows taking ``fixed`` to ``moving``.

    Images are [B, 1, 8H, 8W] (or [8H, 8W]) scaled to [-1, 1]; ``neighbors``
    are the two frames adjacent to ``fixed``. The returned flows satisfy
    fixed(x) ~ moving(x + u(x)).
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    p = weights
    fixed, moving = _as_input(fixed), _as_input(moving)
    prev, nxt = (_as_input(n) for n in neighbors)
    for name, img in (("moving", moving), ("neighbor", prev), ("neighbor", nxt)):
        if img.shape != fixed.shape:
            raise ValueError(f"{name} image {img.shape} does not match fixed {fixed.shape}")

    f1 = feature_encode(p, fixed, cfg.gn_eps)
    f2 = feature_encode(p, moving, cfg.gn_eps)
    pyr = build_pyramid(f1, f2, cfg.levels)

    frames = T.concat([fixed, prev, nxt], axis=1)
    if cfg.denoiser == "resnet":
        denoised = denoise(p, frames)
    elif cfg.denoiser == "unet":
        denoised = unet_denoise(p, frames)
    else:
        denoised = None
    hidden, ctx = context_encode(p, frames if denoised is None else denoised, cfg.hidden_dim, cfg.gn_eps)

    B, _, H, W = f1.shape
    attn = gma_attention(to_rows(ctx), p["gma.w_q"], p["gma.w_k"]) if cfg.use_gma else None
    cell = hidden if cfg.update == "lstm" else None
    if cell is not None:
        cell = Tensor(np.zeros(hidden.shape, dtype=hidden.dtype))
    flow = Tensor(np.zeros((B, 2, H, W), dtype=f1.dtype))
    flows, coarse = [], []
    for _ in range(N):
        corr = lookup(pyr, flow, cfg.radius)
        y = motion_encode(p, corr, flow)
        if cfg.use_gma:
            y_hat = from_rows(gma_apply(attn, to_rows(y), p["gma.w_v"], p["gma.alpha"]), H, W)
        else:
            y_hat = y
        inp = T.concat([ctx, y, y_hat], axis=1)
        if cfg.update == "gru":
            hidden = gru_cell(p, hidden, inp)
        else:
            hidden, cell = lstm_cell(p, hidden, cell, inp)
        flow = T.add(flow, flow_head(p, hidden))
        coarse.append(flow)
        flows.append(upsample_flow(flow))
    return RegistrationOutput(flows, denoised, coarse)

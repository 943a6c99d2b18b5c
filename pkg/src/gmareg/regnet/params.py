"""Canonical parameter map: declaration, initialisation and counting."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..tensor import Tensor
from .config import NetConfig

FEATURE_UNITS = ((32, 1), (32, 1), (64, 2), (64, 1), (128, 2), (128, 1))


def gn_groups(c: int) -> int:
    g = max(1, c // 8)
    while c % g:
        g -= 1
    return g


class ParamSpec(OrderedDict):
    """name -> (shape, init) where init is 'he', 'lecun', 'small', 'zeros' or 'ones'."""

    def conv(self, name, cin, cout, k, init="he", bias=True):
        self[f"{name}.weight"] = ((cout, cin, k, k), init)
        if bias:
            self[f"{name}.bias"] = ((cout,), "zeros")

    def norm(self, name, c):
        self[f"{name}.gamma"] = ((c,), "ones")
        self[f"{name}.beta"] = ((c,), "zeros")


def _declare_encoder(spec: ParamSpec, prefix: str, cin: int, cfg: NetConfig) -> None:
    c0 = cfg.ch(64)
    spec.conv(f"{prefix}.conv1", cin, c0, 7)
    spec.norm(f"{prefix}.norm1", c0)
    prev = c0
    for i, (filters, stride) in enumerate(FEATURE_UNITS):
        c = cfg.ch(filters)
        unit = f"{prefix}.unit{i + 1}"
        spec.conv(f"{unit}.conv_a", prev, c, 3)
        spec.norm(f"{unit}.norm_a", c)
        spec.conv(f"{unit}.conv_b", c, c, 3)
        spec.norm(f"{unit}.norm_b", c)
        if prev != c or stride != 1:
            spec.conv(f"{unit}.skip", prev, c, 1)
        prev = c
    spec.conv(f"{prefix}.conv_out", prev, cfg.ch(256), 1, init="lecun")


def _declare_denoiser(spec: ParamSpec, cfg: NetConfig) -> None:
    f = cfg.denoiser_filters
    if cfg.denoiser == "resnet":
        spec.conv("denoiser.conv_in", 3, 3, 3)
        prev = 3
        for i in range(4):
            blk = f"denoiser.block{i + 1}"
            spec.conv(f"{blk}.conv1", prev, f, 3)
            spec.conv(f"{blk}.conv2", f, f, 3)
            spec.conv(f"{blk}.conv3", f, f, 1, init="lecun")
            if prev != f:
                spec.conv(f"{blk}.skip", prev, f, 1, init="lecun")
            prev = f
        spec.conv("denoiser.conv_out", f, 3, 3, init="small")
    elif cfg.denoiser == "unet":
        chans = (f, 2 * f, 4 * f)
        prev = 3
        for lvl, c in enumerate(chans):
            spec.conv(f"unet.enc{lvl + 1}.conv1", prev, c, 3)
            spec.conv(f"unet.enc{lvl + 1}.conv2", c, c, 3)
            prev = c
        for lvl in (2, 1):
            c = chans[lvl - 1]
            spec.conv(f"unet.dec{lvl}.conv1", prev + c, c, 3)
            spec.conv(f"unet.dec{lvl}.conv2", c, c, 3)
            prev = c
        spec.conv("unet.conv_out", prev, 3, 1, init="small")
    elif cfg.denoiser != "none":
        raise ValueError(f"unknown denoiser {cfg.denoiser!r}")


def declare(cfg: NetConfig) -> ParamSpec:
    spec = ParamSpec()
    _declare_encoder(spec, "fnet", 1, cfg)
    _declare_encoder(spec, "cnet", 3, cfg)
    _declare_denoiser(spec, cfg)
    dm, dc, dh = cfg.motion_dim, cfg.context_dim, cfg.hidden_dim
    spec.conv("motion.conv_corr1", cfg.corr_channels, cfg.ch(128), 1)
    spec.conv("motion.conv_corr2", cfg.ch(128), cfg.ch(256), 3)
    spec.conv("motion.conv_proj", cfg.ch(256) + 2, dm - 2, 3)
    spec["gma.w_q"] = ((dc, dc), "lecun")
    spec["gma.w_k"] = ((dc, dc), "lecun")
    spec["gma.w_v"] = ((dm, dm), "lecun")
    spec["gma.alpha"] = ((1,), "zeros")
    cin = dh + dc + 2 * dm
    gates = ("z", "r", "q") if cfg.update == "gru" else ("i", "f", "o", "g")
    for g in gates:
        spec.conv(f"update.{cfg.update}.conv_{g}", cin, dh, 3, init="lecun")
    spec.conv("update.head.conv1", dh, cfg.ch(256), 3)
    spec.conv("update.head.conv2", cfg.ch(256), 2, 3, init="small")
    return spec


def init_weights(cfg: NetConfig, seed: int = 0, dtype=np.float64) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    weights = {}
    for name, (shape, init) in declare(cfg).items():
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else 1
        if init == "he":
            arr = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif init == "lecun":
            arr = rng.standard_normal(shape) * np.sqrt(1.0 / fan_in)
        elif init == "small":
            arr = rng.standard_normal(shape) * 0.1 * np.sqrt(1.0 / fan_in)
        elif init == "ones":
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        weights[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)
    return weights


def count_parameters(weights: dict[str, Tensor]) -> int:
    return int(sum(p.size for p in weights.values()))

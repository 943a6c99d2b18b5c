"""Denoiser branch: residual CNN (default) or a three-level UNet."""
from .. import tensor as T
from ..tensor import Tensor
from .layers import conv


def _check(frames: Tensor) -> None:
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ValueError(f"denoiser expects [B, 3, H, W] (fixed frame + two neighbours), got {frames.shape}")


def denoise(p, frames: Tensor) -> Tensor:
    """3x3 conv (3 filters) + ReLU, four residual blocks of 3x3/3x3/1x1 convolutions,
    3x3 projection back to three channels added to the input."""
    _check(frames)
    h = T.relu(conv(p, "denoiser.conv_in", frames))
    for i in range(4):
        blk = f"denoiser.block{i + 1}"
        y = T.relu(conv(p, f"{blk}.conv1", h))
        y = T.relu(conv(p, f"{blk}.conv2", y))
        y = conv(p, f"{blk}.conv3", y)
        skip = conv(p, f"{blk}.skip", h) if f"{blk}.skip.weight" in p else h
        h = T.relu(T.add(skip, y))
    return T.add(frames, conv(p, "denoiser.conv_out", h))


def unet_denoise(p, frames: Tensor) -> Tensor:
    _check(frames)
    if frames.shape[2] % 4 or frames.shape[3] % 4:
        raise ValueError("unet denoiser needs spatial dims divisible by 4")
    skips = []
    h = frames
    for lvl in (1, 2, 3):
        if lvl > 1:
            h = T.avg_pool2d(h, 2)
        h = T.relu(conv(p, f"unet.enc{lvl}.conv1", h))
        h = T.relu(conv(p, f"unet.enc{lvl}.conv2", h))
        skips.append(h)
    for lvl in (2, 1):
        h = T.concat([T.resize_bilinear(h, 2), skips[lvl - 1]], axis=1)
        h = T.relu(conv(p, f"unet.dec{lvl}.conv1", h))
        h = T.relu(conv(p, f"unet.dec{lvl}.conv2", h))
    return T.add(frames, conv(p, "unet.conv_out", h))

"""Feature and context encoders (shared architecture, separate weights)."""
from .. import tensor as T
from ..tensor import Tensor
from .layers import conv, norm
from .params import FEATURE_UNITS


def encode(p, prefix: str, x: Tensor, eps: float = 1e-5) -> Tensor:
    """[B, C, 8H, 8W] -> [B, 256w, H, W].

    7x7/2 convolution, six residual units (stride 2 in units 3 and 5), 1x1
    output projection. Each unit is two conv -> group norm -> ReLU stages
    plus an additive skip (1x1 projection when shape changes).
    """
    B, C, H, W = x.shape
    if H % 8 or W % 8:
        raise ValueError(f"encoder input spatial dims must be divisible by 8, got {H}x{W}")
    h = T.relu(norm(p, f"{prefix}.norm1", conv(p, f"{prefix}.conv1", x, stride=2), eps))
    for i, (_, stride) in enumerate(FEATURE_UNITS):
        unit = f"{prefix}.unit{i + 1}"
        y = T.relu(norm(p, f"{unit}.norm_a", conv(p, f"{unit}.conv_a", h, stride=stride), eps))
        y = T.relu(norm(p, f"{unit}.norm_b", conv(p, f"{unit}.conv_b", y), eps))
        skip = conv(p, f"{unit}.skip", h, stride=stride) if f"{unit}.skip.weight" in p else h
        h = T.add(skip, y)
    return conv(p, f"{prefix}.conv_out", h)


def feature_encode(p, img: Tensor, eps: float = 1e-5) -> Tensor:
    return encode(p, "fnet", img, eps)


def context_encode(p, frames: Tensor, hidden_dim: int, eps: float = 1e-5):
    """Context encoding split into (initial hidden state, context features)."""
    c = encode(p, "cnet", frames, eps)
    return T.tanh(c[:, :hidden_dim]), T.relu(c[:, hidden_dim:])

"""Motion encoder, recurrent update cells and the flow head."""
from .. import tensor as T
from ..tensor import Tensor
from .layers import conv


def motion_encode(p, corr: Tensor, flow: Tensor) -> Tensor:
    """Lookup features + current flow -> motion features [B, D_m, H, W] (last 2 channels = flow)."""
    h = T.relu(conv(p, "motion.conv_corr1", corr))
    h = T.relu(conv(p, "motion.conv_corr2", h))
    h = T.relu(conv(p, "motion.conv_proj", T.concat([h, flow], axis=1)))
    return T.concat([h, flow], axis=1)


def gru_cell(p, h: Tensor, x: Tensor, prefix: str = "update.gru", force_z=None) -> Tensor:
    """Convolutional GRU: h' = z * h + (1 - z) * tanh(W_q [r * h, x])."""
    hx = T.concat([h, x], axis=1)
    z = T.sigmoid(conv(p, f"{prefix}.conv_z", hx))
    if force_z is not None:
        z = T.as_tensor(force_z, dtype=h.dtype)
    r = T.sigmoid(conv(p, f"{prefix}.conv_r", hx))
    q = T.tanh(conv(p, f"{prefix}.conv_q", T.concat([T.mul(r, h), x], axis=1)))
    return T.add(T.mul(z, h), T.mul(q, T.add(T.neg(z), 1.0)))


def lstm_cell(p, h: Tensor, c: Tensor, x: Tensor, prefix: str = "update.lstm"):
    """Convolutional LSTM; returns (h', c')."""
    hx = T.concat([h, x], axis=1)
    i = T.sigmoid(conv(p, f"{prefix}.conv_i", hx))
    f = T.sigmoid(conv(p, f"{prefix}.conv_f", hx))
    o = T.sigmoid(conv(p, f"{prefix}.conv_o", hx))
    g = T.tanh(conv(p, f"{prefix}.conv_g", hx))
    c = T.add(T.mul(f, c), T.mul(i, g))
    return T.mul(o, T.tanh(c)), c


def flow_head(p, h: Tensor) -> Tensor:
    return conv(p, "update.head.conv2", T.relu(conv(p, "update.head.conv1", h)))

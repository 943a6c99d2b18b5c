"""Thin helpers that apply named parameters from a weight map."""
from .. import tensor as T
from .params import gn_groups


def conv(p, name, x, stride=1, padding=None):
    w = p[f"{name}.weight"]
    k = w.shape[-1]
    pad = k // 2 if padding is None else padding
    return T.conv2d(x, w, p.get(f"{name}.bias"), stride=stride, padding=pad)


def norm(p, name, x, eps=1e-5):
    return T.group_norm(x, gn_groups(x.shape[1]), p[f"{name}.gamma"], p[f"{name}.beta"], eps)

"""Minimal dense tensors with reverse-mode differentiation."""
from .core import (
    Tape,
    Tensor,
    as_tensor,
    backward,
    get_default_dtype,
    get_tape,
    grad_enabled,
    no_grad,
    set_default_dtype,
    tensor,
)
from .gradcheck import gradcheck, numerical_grad, relative_error
from .ops import *  # noqa: F401,F403
from .ops import __all__ as _ops_all
from .optim import adamw_step, clip_grad_norm, init_adamw_state

__all__ = [
    "Tape", "Tensor", "as_tensor", "backward", "get_default_dtype", "get_tape",
    "grad_enabled", "no_grad", "set_default_dtype", "tensor", "gradcheck",
    "numerical_grad", "relative_error", "adamw_step", "clip_grad_norm",
    "init_adamw_state", *_ops_all,
]

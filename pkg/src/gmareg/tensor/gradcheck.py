"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .core import Tensor, backward, get_tape, no_grad


def numerical_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5,
                   indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Central differences of the scalar ``fn()`` w.r.t. selected flat entries of ``t``."""
    flat = t.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(len(idx))
    with no_grad():
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            out[n] = (fp - fm) / (2 * h)
    return out


def analytic_grads(fn: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for t in inputs:
        t.grad = None
    get_tape().clear()
    loss = fn()
    backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
              max_entries: Optional[int] = None, seed: int = 0, floor: float = 1e-10) -> float:
    """Largest relative error between backprop and central differences.

    ``fn`` must rebuild the computation from ``inputs`` on every call. When
    ``max_entries`` is given, that many entries are drawn at random across all
    inputs instead of checking every one.
    """
    grads = analytic_grads(fn, inputs)
    rng = np.random.default_rng(seed)
    worst = 0.0
    if max_entries is None:
        picks = [(k, None) for k in range(len(inputs))]
    else:
        sizes = np.array([t.size for t in inputs])
        owner = rng.choice(len(inputs), size=max_entries, p=sizes / sizes.sum())
        picks = []
        for k in np.unique(owner):
            cnt = int((owner == k).sum())
            picks.append((k, rng.choice(inputs[k].size, size=min(cnt, inputs[k].size), replace=False)))
    for k, idx in picks:
        t = inputs[k]
        num = numerical_grad(fn, t, h=h, indices=idx)
        ana = grads[k].reshape(-1) if idx is None else grads[k].reshape(-1)[idx]
        worst = max(worst, float(relative_error(ana, num, floor).max()))
    return worst

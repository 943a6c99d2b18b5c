"""Training loop, checkpoints and registration evaluation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..losses import final_loss, warp_numpy
from ..metrics import dice, jacobian_fold_permille, photo_residual
from ..regnet import init_weights, register
from ..tensor import Tensor
from .arrayfile import read_arrays, write_arrays
from .config import RunConfig, one_cycle_lr, parse_config
from .data import make_pair, resample, resample_flow, sample_batch, stack_pairs


@dataclass
class TrainState:
    weights: dict
    opt: dict
    step: int = 0
    losses: list = field(default_factory=list)
    seconds: float = 0.0               # cumulative wall-clock training time


def new_state(cfg: RunConfig) -> TrainState:
    w = init_weights(cfg.net_config(), seed=cfg.seed, dtype=np.dtype(cfg.dtype))
    return TrainState(w, T.init_adamw_state(w))


def save_checkpoint(path, state: TrainState, cfg: RunConfig) -> None:
    rec = {"meta/step": np.array([state.step], dtype=np.float64),
           "meta/losses": np.asarray(state.losses, dtype=np.float64),
           "meta/seconds": np.array([state.seconds]),
           "meta/config": np.frombuffer(cfg.to_text().encode(), dtype=np.uint8)}
    for k, p in state.weights.items():
        rec[f"w/{k}"] = p.data
        rec[f"m/{k}"] = state.opt["m"][k]
        rec[f"v/{k}"] = state.opt["v"][k]
    write_arrays(path, rec)


def load_checkpoint(path) -> tuple:
    """Returns ``(state, cfg)``; weights are restored bit-exactly."""
    rec = read_arrays(path)
    if "meta/config" not in rec:
        raise ValueError(f"{path}: not a checkpoint (no meta/config record)")
    cfg = parse_config(rec["meta/config"].tobytes().decode())
    step = int(rec["meta/step"][0])
    names = [k[2:] for k in rec if k.startswith("w/")]
    weights = {k: Tensor(rec[f"w/{k}"], requires_grad=True, name=k) for k in names}
    opt = {"step": step, "m": {k: rec[f"m/{k}"] for k in names}, "v": {k: rec[f"v/{k}"] for k in names}}
    seconds = float(rec["meta/seconds"][0]) if "meta/seconds" in rec else 0.0
    return TrainState(weights, opt, step, list(rec["meta/losses"]), seconds), cfg


def batch_loss(weights: dict, batch: dict, cfg: RunConfig):
    """Forward pass and final loss of one batch (records on the tape)."""
    out = register(weights, batch["fixed"], batch["moving"], (batch["prev"], batch["next"]),
                   cfg.net_config(), N=cfg.N)
    return final_loss(out.flows, Tensor(batch["fixed_full"]), Tensor(batch["moving_full"]),
                      out.denoised, Tensor(batch["context_full"]), cfg.loss_config())


def train_step(state: TrainState, corpus: list, cfg: RunConfig) -> float:
    # a per-step generator makes resumption independent of earlier draws
    rng = np.random.default_rng([cfg.seed, state.step])
    batch = stack_pairs(sample_batch(corpus, rng, cfg.batch), np.dtype(cfg.dtype))
    for p in state.weights.values():
        p.grad = None
    loss = batch_loss(state.weights, batch, cfg)
    T.backward(loss)
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in state.weights.items()}
    T.clip_grad_norm(grads, cfg.clip)
    lr = one_cycle_lr(state.step, cfg.total_steps, cfg.lr_max)
    T.adamw_step(state.weights, grads, state.opt, lr, weight_decay=cfg.weight_decay)
    state.step += 1
    value = float(loss.item())
    state.losses.append(value)
    return value


def train(cfg: RunConfig, corpus: list, state: TrainState | None = None, stop_at: int | None = None,
          checkpoint=None, checkpoint_every: int = 0, log=None) -> TrainState:
    """Run (or resume) training until ``stop_at`` (default: the configured total)."""
    state = state or new_state(cfg)
    stop = cfg.total_steps if stop_at is None else min(stop_at, cfg.total_steps)
    t0 = time.time()
    base = state.seconds
    while state.step < stop:
        loss = train_step(state, corpus, cfg)
        state.seconds = base + time.time() - t0
        if log is not None:
            log(f"step {state.step} loss {loss:.6f} lr {one_cycle_lr(state.step - 1, cfg.total_steps, cfg.lr_max):.3g} "
                f"elapsed {time.time() - t0:.1f}s")
        if checkpoint and checkpoint_every and state.step % checkpoint_every == 0:
            save_checkpoint(checkpoint, state, cfg)
    if checkpoint:
        save_checkpoint(checkpoint, state, cfg)
    return state


def predict_flow(weights: dict, cfg: RunConfig, fixed, moving, prev, nxt, grid: int | None = None) -> np.ndarray:
    """Final full-resolution flow u_N for one pair, shape (2, H, W).

    With ``grid`` the four frames are resampled to ``grid x grid`` for the
    network and the flow is resampled back, so a model runs at the pixel
    scale it was trained on.
    """
    dt = np.dtype(cfg.dtype)
    shape = np.shape(fixed)
    imgs = [np.asarray(a, np.float64) for a in (fixed, moving, prev, nxt)]
    if grid is not None and shape != (grid, grid):
        imgs = [resample(a, (grid, grid)) for a in imgs]
    imgs = [a.astype(dt)[None, None] for a in imgs]
    with T.no_grad():
        out = register(weights, imgs[0], imgs[1], (imgs[2], imgs[3]), cfg.net_config(), N=cfg.N)
    u = out.flows[-1].data[0].astype(np.float64)
    return resample_flow(u, shape) if u.shape[-2:] != shape else u


def mean_loss(weights: dict, cfg: RunConfig, corpus: list, n_batches: int = 4, seed: int = 12345) -> float:
    """Mean final loss over fixed held-out batches (no gradient)."""
    vals = []
    for b in range(n_batches):
        rng = np.random.default_rng([seed, b])
        batch = stack_pairs(sample_batch(corpus, rng, cfg.batch), np.dtype(cfg.dtype))
        with T.no_grad():
            vals.append(batch_loss(weights, batch, cfg).item())
    return float(np.mean(vals))


def warp_mask(mask: np.ndarray, u: np.ndarray) -> np.ndarray:
    return warp_numpy(mask.astype(np.float64), u) >= 0.5


def end_state_dice(weights, cfg: RunConfig, seq, mask_name: str = "lv", flow_fn=None) -> dict:
    """Dice of the moving end-state mask warped onto the fixed end-state mask.

    End-diastole is frame 0 and end-systole the mid-cycle frame; both
    directions are evaluated. ``flow_fn(t, tau)`` overrides the network.
    """
    F = len(seq.full)
    ed, es = 0, F // 2
    masks = seq.scene.masks[mask_name]
    out = {}
    for t, tau in ((ed, es), (es, ed)):
        if flow_fn is not None:
            u = flow_fn(t, tau)
        else:
            pair = make_pair(seq.inputs, seq.full, t, tau, seq.scene.cyclic)
            u = predict_flow(weights, cfg, pair.fixed, pair.moving, *pair.neighbors)
        out[(t, tau)] = dice(warp_mask(masks[tau], u), masks[t])
    return out


def evaluate_pairs(weights, cfg: RunConfig, corpus: list, n_pairs: int, seed: int = 0) -> dict:
    """Photometric residual and folding of u_N against zero flow over seeded pairs."""
    rng = np.random.default_rng(seed)
    model, zero, fold = [], [], []
    for _ in range(n_pairs):
        p = sample_batch(corpus, rng, 1)[0]
        u = predict_flow(weights, cfg, p.fixed, p.moving, *p.neighbors)
        model.append(photo_residual(p.fixed_full, p.moving_full, u))
        zero.append(photo_residual(p.fixed_full, p.moving_full, np.zeros_like(u)))
        fold.append(jacobian_fold_permille(u))
    return {"photo_residual": float(np.mean(model)), "zero_flow_residual": float(np.mean(zero)),
            "fold_permille": float(np.mean(fold)), "per_pair": model}

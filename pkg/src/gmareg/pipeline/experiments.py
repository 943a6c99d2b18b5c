"""Experiment drivers: objective gradient check and the ablation matrix."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..losses import LossConfig, final_loss
from ..regnet import NetConfig, init_weights, register
from ..tensor import Tensor
from ..tensor.gradcheck import analytic_grads, numerical_grad, relative_error
from .config import RunConfig
from .data import build_corpus


def objective_problem(size: int = 16, seed: int = 0, N: int = 3, cfg: NetConfig = NetConfig()):
    """A small f64 training objective; returns ``(fn, tensors)`` for gradient checks.

    ``tensors`` are all network weights followed by the fixed and moving
    inputs. Weights and images are drawn so that the flows stay inside the
    image and away from clamped borders.
    """
    rng = np.random.default_rng(seed)
    w = init_weights(cfg, seed=seed, dtype=np.float64)
    w["gma.alpha"].data[:] = 0.5           # exercise the attention branch
    for k in ("update.head.conv2.weight", "update.head.conv2.bias"):
        w[k].data *= 0.05
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    base = np.sin(2 * np.pi * xx / size) * np.cos(2 * np.pi * yy / size)

    def img():
        return Tensor((0.6 * base + 0.3 * rng.standard_normal((size, size)))[None, None], requires_grad=True)

    fixed, moving, prev, nxt = img(), img(), img(), img()
    ctx = Tensor(rng.uniform(-1, 1, (1, 3, size, size)))
    lcfg = LossConfig(N=N)

    def fn():
        out = register(w, fixed, moving, (prev, nxt), cfg, N=N)
        return final_loss(out.flows, fixed, moving, out.denoised, ctx, lcfg)

    return fn, list(w.values()) + [fixed, moving]


def objective_gradcheck(size: int = 16, seed: int = 0, max_entries: int = 6, N: int = 3,
                        h: float = 1e-6, floor: float = 1e-7, return_all: bool = False):
    """Worst relative error of backprop vs central differences over sampled
    entries of every weight tensor and both input images."""
    fn, tensors = objective_problem(size, seed, N)
    grads = analytic_grads(fn, tensors)
    scale = max(float(np.abs(g).max()) for g in grads)
    rng = np.random.default_rng(seed + 1)
    errors = {}
    for t, g in zip(tensors, grads):
        k = min(max_entries, t.size)
        idx = rng.choice(t.size, size=k, replace=False)
        num = numerical_grad(fn, t, h=h, indices=idx)
        errors[t.name or f"input{len(errors)}"] = float(relative_error(g.reshape(-1)[idx], num, floor * scale).max())
    worst = max(errors.values())
    return (worst, errors) if return_all else worst


def run_ablation(cfg: RunConfig, variants, n_pairs: int, R: float, workdir: Path, log=None) -> dict:
    """Train (or reuse) one checkpoint per variant and compare the photometric
    residual of u_N on ``n_pairs`` seeded pairs from held-out scenes at ``R``.

    Returns ``{variant: (mean residual, std, mean fold per-mille)}``.
    """
    from .train import evaluate_pairs, load_checkpoint, train

    workdir.mkdir(parents=True, exist_ok=True)
    table = {}
    for v in variants:
        vcfg = replace(cfg, variant=v)
        ckpt = workdir / f"{v}.mraf"
        state = None
        if ckpt.is_file():
            state, saved = load_checkpoint(ckpt)
            if saved != vcfg:
                raise ValueError(f"{ckpt} was trained with a different configuration")
        if state is None or state.step < vcfg.total_steps:
            corpus = build_corpus(vcfg.kind, vcfg.image_size, vcfg.frames, vcfg.n_scenes, vcfg.R,
                                  vcfg.seed, vcfg.trajectory, vcfg.crop, warm_start=v == "warm_start")
            state = train(vcfg, corpus, state, checkpoint=ckpt, checkpoint_every=50, log=log)
        test = build_corpus(vcfg.kind, vcfg.image_size, vcfg.frames, 4, (R,), vcfg.seed + 10_000,
                            vcfg.trajectory, vcfg.crop, warm_start=v == "warm_start")
        res = evaluate_pairs(state.weights, vcfg, test, n_pairs, seed=vcfg.seed)
        table[v] = (res["photo_residual"], float(np.std(res["per_pair"])), res["fold_permille"])
    return table

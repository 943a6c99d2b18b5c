"""Command-line drivers: ``gmareg <command> [options]``; exit status 0 on success, 1 on error."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .. import metrics as M
from .arrayfile import ArrayFileError, read_arrays, write_arrays
from .config import RunConfig, load_config, parse_config
from .data import build_corpus, make_scene, neighbor_frames, scale_unit, undersample
from .io import (load_acquisition, load_flows, load_scene, save_acquisition, save_flows,
                 save_scene)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = "\n".join(getattr(args, "set", None) or [])
    return parse_config(overrides, cfg) if overrides else cfg


def cmd_phantom_gen(args, out) -> None:
    scene = make_scene(args.kind, args.size, args.frames, args.seed)
    save_scene(args.out, scene)
    out(f"wrote {args.kind} phantom {args.size}x{args.size}x{args.frames} (seed {args.seed}) to {args.out}")


def cmd_undersample(args, out) -> None:
    scene = load_scene(args.scene)
    acq = undersample(scene, args.R, args.trajectory, seed=args.seed)
    save_acquisition(args.out, acq, scene.coil_maps, scene.cyclic)
    achieved = acq.sampling.achieved_R if hasattr(acq.sampling, "achieved_R") else args.R
    out(f"wrote {args.trajectory} acquisition R={args.R:g} (achieved {achieved:.3g}) to {args.out}")


def cmd_train(args, out) -> None:
    from .train import load_checkpoint, train
    if args.resume:
        state, cfg = load_checkpoint(args.resume)
    else:
        state, cfg = None, _config(args)
    corpus = build_corpus(cfg.kind, cfg.image_size, cfg.frames, cfg.n_scenes, cfg.R, cfg.seed,
                          cfg.trajectory, cfg.crop, warm_start=cfg.variant == "warm_start")
    log = out if args.verbose else None
    state = train(cfg, corpus, state, stop_at=args.stop_at, checkpoint=args.out,
                  checkpoint_every=args.checkpoint_every, log=log)
    first = np.mean(state.losses[:cfg.steps_per_epoch])
    last = np.mean(state.losses[-cfg.steps_per_epoch:])
    out(f"trained {state.step} steps; first-epoch mean loss {first:.6f}, last-epoch mean loss {last:.6f}")


def _network_inputs(path):
    """Network inputs, sequence length and wrap mode from a scene or acquisition file."""
    rec = read_arrays(path)
    if "zero_filled" in rec:
        acq, _, cyclic = load_acquisition(path)
        return scale_unit(acq.zero_filled), cyclic
    scene = load_scene(path)
    return scale_unit(scene.frames), scene.cyclic


def cmd_register(args, out) -> None:
    from dataclasses import replace
    from .train import load_checkpoint, predict_flow
    state, cfg = load_checkpoint(args.checkpoint)
    if args.N is not None:
        cfg = replace(cfg, N=args.N)
    frames, cyclic = _network_inputs(args.inputs)
    F = len(frames)
    flows = {}
    for t in range(F):
        for tau in range(F):
            if t == tau:
                continue
            # u_{t->tau} warps frame t onto frame tau: tau is the fixed image
            p, n = neighbor_frames(tau, F, cyclic)
            flows[(t, tau)] = predict_flow(state.weights, cfg, frames[tau], frames[t], frames[p], frames[n],
                                           grid=None if args.native else cfg.image_size)
    save_flows(args.out, flows)
    out(f"wrote {len(flows)} flows (N={cfg.N}) to {args.out}")


def _all_pairs(flows: dict, F: int, shape) -> np.ndarray:
    arr = np.zeros((F, F, 2) + tuple(shape))
    for (t, tau), u in flows.items():
        arr[t, tau] = u
    return arr


def cmd_recon(args, out) -> None:
    from ..moco import recon_cycle
    acq, coils, cyclic = load_acquisition(args.undersampled)
    F = acq.kspace.shape[0]
    if args.flows:
        flows = _all_pairs(load_flows(args.flows), F, coils.shape[-2:])
    elif args.scene:
        flows = load_scene(args.scene).gt_flows
    else:
        flows = None
    rec = recon_cycle(list(acq.kspace), coils, acq.sampling, flows, T=args.T, cyclic=cyclic,
                      max_iter=args.max_iter)
    write_arrays(args.out, {"recon": rec, "zero_filled": acq.zero_filled}, lossy_complex=True)
    out(f"wrote {F} reconstructed frames (T={args.T}) to {args.out}")


def _images(path, key):
    rec = read_arrays(path)
    for k in ([key] if key else ["recon", "frames", "zero_filled"]):
        if k in rec:
            return np.abs(rec[k]).astype(np.float64)
    raise CliError(f"{path}: no image record {key or 'recon/frames/zero_filled'}")


def cmd_eval(args, out) -> None:
    report = M.MetricReport()
    if args.pred:
        if not args.ref:
            raise CliError("eval --pred needs --ref")
        a, b = _images(args.pred, args.pred_key), _images(args.ref, args.ref_key)
        if a.shape != b.shape:
            raise CliError(f"image shapes differ: {a.shape} vs {b.shape}")
        for x, y in zip(a, b):
            report.add("ssim", M.ssim(x, y))
            report.add("psnr", M.psnr(x, y))
            report.add("nrmse", M.nrmse(x, y))
            report.add("hfen", M.hfen(x, y))
    if args.flows:
        if not args.scene:
            raise CliError("eval --flows needs --scene")
        from .train import warp_mask
        scene = load_scene(args.scene)
        full = scale_unit(scene.frames)
        for (t, tau), u in load_flows(args.flows).items():
            # u_{t->tau}: frame t warped by u approximates frame tau
            for name, masks in scene.masks.items():
                report.add(f"dice_{name}", M.dice(warp_mask(masks[t], u), masks[tau]))
            report.add("photo_residual", M.photo_residual(full[tau], full[t], u))
            report.add("fold_permille", M.jacobian_fold_permille(u))
    if not report.values:
        raise CliError("eval: nothing to evaluate (give --pred/--ref and/or --flows/--scene)")
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    out(text.rstrip("\n"))


def cmd_gradcheck(args, out) -> None:
    from .experiments import objective_gradcheck
    err = objective_gradcheck(size=args.size, seed=args.seed, max_entries=args.entries)
    out(f"full objective gradcheck on {args.size}x{args.size}: worst relative error {err:.3e} (tol {args.tol:g})")
    if not err < args.tol:
        raise CliError(f"gradcheck failed: {err:.3e} >= {args.tol:g}")


def cmd_ablate(args, out) -> None:
    from .experiments import run_ablation
    cfg = _config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    table = run_ablation(cfg, variants, args.pairs, args.R, Path(args.workdir), log=out if args.verbose else None)
    lines = ["# variant photo_residual std fold_permille"]
    for v, (m, s, f) in table.items():
        lines.append(f"{v} {m:.6g} {s:.6g} {f:.6g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    out(text.rstrip("\n"))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gmareg", description="Deformable registration of dynamic MR frames and motion-compensated reconstruction.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("phantom-gen", help="write a synthetic dynamic phantom")
    p.add_argument("--kind", choices=("cardiac", "respiratory"), default="cardiac")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("undersample", help="simulate an accelerated acquisition and its zero-filled images")
    p.add_argument("--scene", required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--trajectory", choices=("cartesian", "radial"), default="cartesian")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_undersample)

    p = sub.add_parser("train", help="train the registration network on phantom scenes")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--resume", help="continue from a checkpoint (its config is used)")
    p.add_argument("--stop-at", type=int, default=None, help="stop after this many total steps")
    p.add_argument("--checkpoint-every", type=int, default=50)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("register", help="estimate flows for every ordered frame pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--inputs", required=True, help="scene or acquisition file")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--native", action="store_true",
                   help="run the network at the input size instead of resampling to the training size")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("recon", help="motion-compensated CG-SENSE of every frame")
    p.add_argument("--undersampled", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--flows", help="flow file from `register`")
    g.add_argument("--scene", help="use the scene's ground-truth motion")
    p.add_argument("--T", type=int, default=6)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("eval", help="image-quality and registration metrics")
    p.add_argument("--pred")
    p.add_argument("--ref")
    p.add_argument("--pred-key")
    p.add_argument("--ref-key")
    p.add_argument("--flows")
    p.add_argument("--scene")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full training objective")
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--entries", type=int, default=6, help="sampled entries per parameter tensor")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and compare model variants")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--variants", default="full,no_gma,no_denoiser")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--R", type=float, default=8.0)
    p.add_argument("--workdir", required=True)
    p.add_argument("--out")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return ap


def main(argv=None, out=print) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.command is None:
            raise CliError("no command given; see --help")
        if getattr(args, "frames", "absent") is None:
            args.frames = 16 if args.kind == "cardiac" else 4
        args.func(args, out)
    except SystemExit as exc:          # --help
        return 0 if not exc.code else 1
    except (CliError, ValueError, FileNotFoundError, ArrayFileError, KeyError, FloatingPointError) as exc:
        msg = str(exc).strip("'\"") or exc.__class__.__name__
        print(f"gmareg: error: {msg}", file=sys.stderr)
        return 1
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

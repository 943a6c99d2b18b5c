import struct

import numpy as np
import pytest

from gmareg.metrics import MetricReport
from gmareg.phantom import make_cardiac_phantom, make_respiratory_phantom
from gmareg.pipeline.arrayfile import ArrayFileError, decode, encode, read_arrays, write_arrays
from gmareg.pipeline.cli import main
from gmareg.pipeline.config import RunConfig, load_config, one_cycle_lr, parse_config
from gmareg.pipeline.data import (build_corpus, center_crop, neighbor_frames, pair_sampler, resample,
                                  resample_flow, scale_unit, undersample, zero_pad)
from gmareg.pipeline.io import load_acquisition, load_flows, load_scene, save_acquisition, save_flows, save_scene
from gmareg.pipeline.train import load_checkpoint, new_state, save_checkpoint, train


# ---- array container ------------------------------------------------------

def hand_encode(name, code, arr, dt):
    """Byte layout written out field by field."""
    raw = name.encode()
    body = struct.pack("<H", len(raw)) + raw + bytes([code, arr.ndim])
    body += b"".join(struct.pack("<Q", n) for n in arr.shape)
    return b"MRAF\x01" + struct.pack("<I", 1) + body + arr.astype(dt).tobytes(order="C")


@pytest.mark.parametrize("code,dt", [(0, "<f4"), (1, "<f8"), (2, "<c8"), (3, "u1")])
def test_arrayfile_bytes_match_layout(code, dt):
    rng = np.random.default_rng(code)
    arr = (rng.standard_normal((3, 4, 2)) * 10).astype(dt)
    if code == 2:
        arr = arr + 1j * arr[::-1]
        arr = arr.astype(dt)
    buf = encode({"x/é": arr})
    assert buf == hand_encode("x/é", code, arr, dt)
    back = decode(buf)["x/é"]
    assert back.dtype == np.dtype(dt) and back.tobytes() == arr.tobytes()


def test_arrayfile_multi_record_roundtrip(tmp_path):
    recs = {"a": np.arange(6, dtype=np.float64).reshape(2, 3), "b": np.zeros((0, 5), np.float32),
            "c": np.array(3.5), "mask": np.eye(3, dtype=bool)}
    write_arrays(tmp_path / "f.mraf", recs)
    back = read_arrays(tmp_path / "f.mraf")
    assert list(back) == list(recs)
    assert back["b"].shape == (0, 5) and back["c"].shape == ()
    assert np.array_equal(back["mask"], recs["mask"].astype(np.uint8))
    assert encode(back) == encode({k: np.asarray(v) if v.dtype != bool else v.astype(np.uint8)
                                   for k, v in recs.items()})


def test_arrayfile_errors(tmp_path):
    good = encode({"a": np.ones(4)})
    with pytest.raises(ArrayFileError, match="magic"):
        decode(b"NOPE" + good[4:])
    with pytest.raises(ArrayFileError, match="version"):
        decode(good[:4] + b"\x02" + good[5:])
    with pytest.raises(ArrayFileError, match="truncated"):
        decode(good[:-3])
    with pytest.raises(ArrayFileError, match="trailing"):
        decode(good + b"\x00")
    with pytest.raises(ArrayFileError, match="dtype"):
        encode({"z": np.ones(3, np.complex128)})
    with pytest.raises(ArrayFileError, match="dtype"):
        encode({"i": np.ones(3, np.int64)})
    dup = b"MRAF\x01" + struct.pack("<I", 2) + good[9:] + good[9:]
    with pytest.raises(ArrayFileError, match="duplicate"):
        decode(dup)
    with pytest.raises(FileNotFoundError):
        read_arrays(tmp_path / "missing.mraf")
    z = np.array([1 + 2j, 3 - 4j])
    assert np.array_equal(decode(encode({"z": z}, lossy_complex=True))["z"], z.astype(np.complex64))


# ---- configuration and schedule ---------------------------------------------

def test_config_defaults():
    cfg = RunConfig()
    assert (cfg.N, cfg.delta, cfg.beta, cfg.gamma, cfg.lr_max, cfg.T) == (12, 0.5, 0.8, 0.2, 5e-4, 6)
    assert cfg.total_steps == cfg.epochs * cfg.steps_per_epoch


def test_config_parse_roundtrip(tmp_path):
    cfg = parse_config("N = 4  # fewer iterations\n\nR = 1, 4\nvariant = no_gma\ndtype=float64\n")
    assert cfg.N == 4 and cfg.R == (1.0, 4.0) and cfg.variant == "no_gma" and cfg.dtype == "float64"
    assert parse_config(cfg.to_text()) == cfg
    (tmp_path / "c.cfg").write_text(cfg.to_text())
    assert load_config(tmp_path / "c.cfg") == cfg


@pytest.mark.parametrize("text,match", [("bogus = 1", "unknown key"), ("N 4", "key = value"),
                                        ("N = four", "cannot parse"), ("variant = tiny", "variant"),
                                        ("image_size = 20", "multiples of 8"), ("R = 0.5", ">= 1")])
def test_config_rejects(text, match):
    with pytest.raises(ValueError, match=match):
        parse_config(text)


def test_one_cycle_schedule():
    total, lr = 1001, 5e-4
    assert one_cycle_lr(0, total, lr) == pytest.approx(lr / 25)
    assert one_cycle_lr(300, total, lr) == pytest.approx(lr)
    assert one_cycle_lr(total - 1, total, lr) == pytest.approx(lr / 25)
    assert one_cycle_lr(150, total, lr) == pytest.approx((lr / 25 + lr) / 2)
    vals = [one_cycle_lr(s, total, lr) for s in range(total)]
    assert max(vals) == pytest.approx(lr)
    assert np.all(np.diff(vals[:301]) > 0) and np.all(np.diff(vals[300:]) < 0)
    for bad in (-1, total):
        with pytest.raises(ValueError):
            one_cycle_lr(bad, total, lr)


# ---- data preparation ---------------------------------------------------------

def test_scale_unit_range():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 8, 8)) * 5 + 1j
    s = scale_unit(x)
    assert s.min() == -1.0 and s.max() == 1.0
    assert np.array_equal(scale_unit(np.ones((2, 3, 3))), np.zeros((2, 3, 3)))


def test_crop_pad_roundtrip():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 12, 10))
    c = center_crop(x, 8)
    assert c.shape == (2, 8, 8)
    assert np.array_equal(center_crop(zero_pad(c, (12, 10)), 8), c)
    padded = zero_pad(c, (12, 10))
    assert np.array_equal(padded[:, 2:10, 1:9], c) and padded.sum() == pytest.approx(c.sum())
    with pytest.raises(ValueError):
        center_crop(x, 16)


def test_resample_flow_rescales_displacements():
    u = np.stack([np.full((64, 64), 2.0), np.full((64, 64), -1.0)])
    v = resample_flow(u, (96, 80))
    assert v.shape == (2, 96, 80)
    assert np.allclose(v[0], 2.0 * 80 / 64) and np.allclose(v[1], -1.0 * 96 / 64)
    ramp = np.tile((np.arange(32) + 0.5) / 32.0, (32, 1))
    up = resample(ramp, (64, 64))
    assert np.allclose(up[:, 1:-1], ((np.arange(64) + 0.5) / 64.0)[1:-1], atol=1e-12)
    assert resample(ramp, (32, 32)) is ramp


def test_neighbors():
    assert neighbor_frames(0, 5, True) == (4, 1)
    assert neighbor_frames(4, 5, True) == (3, 0)
    assert neighbor_frames(0, 5, False) == (0, 1)
    assert neighbor_frames(4, 5, False) == (3, 4)


def test_pair_sampler_covers_all_ordered_pairs():
    scene = make_respiratory_phantom(32, 32, seed=0)
    gen = pair_sampler(scene, seed=3)
    seen = {(p.t, p.tau) for p in (next(gen) for _ in range(400))}
    assert seen == {(t, tau) for t in range(4) for tau in range(4) if t != tau}
    p = next(gen)
    assert p.fixed.min() >= -1 and p.fixed.max() <= 1
    assert p.context_full.shape == (3, 32, 32)
    a, b = pair_sampler(scene, seed=9), pair_sampler(scene, seed=9)
    assert [(next(a).t, next(a).tau) for _ in range(10)] == [(next(b).t, next(b).tau) for _ in range(10)]


def test_pair_sampler_needs_three_frames():
    scene = make_respiratory_phantom(32, 32, bins=2, seed=0)
    with pytest.raises(ValueError, match="3 frames"):
        next(pair_sampler(scene, seed=0))


def test_undersample_fully_sampled_zero_filled_is_truth():
    scene = make_cardiac_phantom(32, 32, 4, seed=1)
    acq = undersample(scene, 1.0)
    assert np.max(np.abs(acq.zero_filled - scene.frames)) < 1e-10
    acq8 = undersample(scene, 8.0, seed=2)
    assert acq8.sampling.lines.shape == (32, 4)
    assert np.max(np.abs(acq8.zero_filled - scene.frames)) > 0.05


def test_corpus_layout():
    corpus = build_corpus("cardiac", 32, 4, 2, (1.0, 4.0), seed=5, crop=16)
    assert [s.R for s in corpus] == [1.0, 4.0, 1.0, 4.0]
    assert corpus[0].inputs.shape == (4, 16, 16)
    assert np.array_equal(corpus[0].inputs, corpus[0].full)
    assert corpus[2].scene.seed == 6


# ---- files -------------------------------------------------------------------

def test_scene_and_acquisition_files(tmp_path):
    scene = make_cardiac_phantom(32, 32, 4, seed=2)
    save_scene(tmp_path / "s.mraf", scene)
    back = load_scene(tmp_path / "s.mraf")
    assert np.max(np.abs(back.frames - scene.frames)) < 1e-6
    assert back.gt_flows.tobytes() == scene.gt_flows.tobytes()
    assert back.cyclic and back.kind == "cardiac" and np.array_equal(back.masks["lv"], scene.masks["lv"])
    for traj in ("cartesian", "radial"):
        acq = undersample(scene, 4.0, traj)
        save_acquisition(tmp_path / "a.mraf", acq, scene.coil_maps, True)
        a2, coils, cyclic = load_acquisition(tmp_path / "a.mraf")
        assert cyclic and a2.radial == (traj == "radial")
        assert np.max(np.abs(a2.kspace - acq.kspace)) < 1e-5 * np.max(np.abs(acq.kspace))


def test_flow_file(tmp_path):
    flows = {(0, 1): np.ones((2, 4, 4)), (1, 0): -np.ones((2, 4, 4))}
    save_flows(tmp_path / "f.mraf", flows)
    back = load_flows(tmp_path / "f.mraf")
    assert set(back) == set(flows) and np.array_equal(back[(1, 0)], flows[(1, 0)])


# ---- training ----------------------------------------------------------------

TINY = dict(image_size=16, frames=4, n_scenes=1, R=(1.0,), batch=1, N=1, epochs=1, steps_per_epoch=4,
            dtype="float64")


def test_resume_is_bit_exact(tmp_path):
    cfg = RunConfig(**TINY)
    corpus = build_corpus(cfg.kind, cfg.image_size, cfg.frames, cfg.n_scenes, cfg.R, cfg.seed)
    straight = train(cfg, corpus)
    first = train(cfg, corpus, stop_at=2, checkpoint=tmp_path / "ck.mraf")
    assert first.step == 2
    state, cfg2 = load_checkpoint(tmp_path / "ck.mraf")
    assert cfg2 == cfg
    resumed = train(cfg2, corpus, state)
    assert resumed.step == straight.step == 4
    assert resumed.losses == straight.losses
    for k, p in straight.weights.items():
        assert p.data.tobytes() == resumed.weights[k].data.tobytes()


def test_checkpoint_roundtrip(tmp_path):
    cfg = RunConfig(**TINY)
    s = new_state(cfg)
    save_checkpoint(tmp_path / "c.mraf", s, cfg)
    back, cfg2 = load_checkpoint(tmp_path / "c.mraf")
    assert cfg2 == cfg and back.step == 0
    assert set(back.weights) == set(s.weights)
    with pytest.raises(ValueError, match="checkpoint"):
        write_arrays(tmp_path / "x.mraf", {"a": np.ones(2)})
        load_checkpoint(tmp_path / "x.mraf")


# ---- command line --------------------------------------------------------------

def run(argv):
    lines = []
    code = main([str(a) for a in argv], out=lines.append)
    return code, "\n".join(lines)


@pytest.fixture(scope="module")
def cli_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["phantom-gen", "--kind", "cardiac", "--size", 16, "--frames", 4, "--out", d / "scene.mraf"])[0] == 0
    assert run(["undersample", "--scene", d / "scene.mraf", "--R", 2, "--out", d / "acq.mraf"])[0] == 0
    code, text = run(["train", "--set", "image_size=16", "--set", "frames=4", "--set", "n_scenes=1",
                      "--set", "batch=1", "--set", "N=1", "--set", "epochs=1", "--set", "steps_per_epoch=1",
                      "--set", "R=1", "--out", d / "ck.mraf"])
    assert code == 0, text
    return d


def test_cli_eval_identical(cli_files):
    code, text = run(["eval", "--pred", cli_files / "scene.mraf", "--ref", cli_files / "scene.mraf",
                      "--out", cli_files / "m.txt"])
    assert code == 0
    parsed = MetricReport.parse(text)
    assert parsed["ssim"][0] == pytest.approx(1.0) and parsed["nrmse"][0] == 0.0
    assert (cli_files / "m.txt").read_text().strip() == text


def test_cli_register_and_recon(cli_files):
    d = cli_files
    code, text = run(["register", "--checkpoint", d / "ck.mraf", "--inputs", d / "acq.mraf", "--out", d / "flows.mraf"])
    assert code == 0, text
    flows = load_flows(d / "flows.mraf")
    assert len(flows) == 4 * 3
    first = (d / "flows.mraf").read_bytes()
    assert run(["register", "--checkpoint", d / "ck.mraf", "--inputs", d / "acq.mraf", "--out", d / "flows.mraf"])[0] == 0
    assert (d / "flows.mraf").read_bytes() == first
    code, text = run(["recon", "--undersampled", d / "acq.mraf", "--flows", d / "flows.mraf", "--T", 1,
                      "--max-iter", 3, "--out", d / "rec.mraf"])
    assert code == 0, text
    assert read_arrays(d / "rec.mraf")["recon"].shape == (4, 16, 16)
    code, text = run(["eval", "--flows", d / "flows.mraf", "--scene", d / "scene.mraf"])
    assert code == 0 and "dice_lv" in text and "fold_permille" in text


def test_cli_errors(cli_files, capsys):
    assert run(["eval", "--bogus"])[0] == 1
    assert "gmareg: error" in capsys.readouterr().err
    assert run(["eval", "--pred", cli_files / "nope.mraf", "--ref", cli_files / "scene.mraf"])[0] == 1
    assert "not found" in capsys.readouterr().err
    assert run([])[0] == 1
    assert run(["eval"])[0] == 1
    assert run(["undersample", "--scene", cli_files / "scene.mraf", "--R", 0.5, "--out", cli_files / "x"])[0] == 1

"""Scene, acquisition and flow files on top of the array container."""
from __future__ import annotations

import numpy as np

from ..mri.cartesian import CartesianMask
from ..mri.radial import RadialTrajectory
from ..phantom import PhantomScene
from .arrayfile import read_arrays, write_arrays
from .data import Acquisition


def _text(s: str) -> np.ndarray:
    return np.frombuffer(s.encode(), dtype=np.uint8)


def _untext(a: np.ndarray) -> str:
    return a.tobytes().decode()


def _need(rec: dict, path, *names) -> None:
    missing = [n for n in names if n not in rec]
    if missing:
        raise ValueError(f"{path}: missing record(s) {', '.join(missing)}")


def save_scene(path, scene: PhantomScene) -> None:
    rec = {"frames": scene.frames, "gt_flows": scene.gt_flows, "coil_maps": scene.coil_maps,
           "meta/kind": _text(scene.kind), "meta/seed": np.array([scene.seed], dtype=np.float64),
           "meta/cyclic": np.array([scene.cyclic], dtype=np.uint8)}
    for k, m in scene.masks.items():
        rec[f"mask/{k}"] = m.astype(np.uint8)
    for k, v in scene.params.items():
        rec[f"param/{k}"] = np.atleast_1d(np.asarray(v, dtype=np.float64))
    write_arrays(path, rec, lossy_complex=True)


def load_scene(path) -> PhantomScene:
    rec = read_arrays(path)
    _need(rec, path, "frames", "gt_flows", "coil_maps", "meta/kind")
    masks = {k[5:]: v.astype(bool) for k, v in rec.items() if k.startswith("mask/")}
    params = {k[6:]: (v if v.size > 1 else float(v[0])) for k, v in rec.items() if k.startswith("param/")}
    return PhantomScene(rec["frames"].astype(np.complex128), rec["gt_flows"], masks,
                        rec["coil_maps"].astype(np.complex128), int(rec["meta/seed"][0]),
                        bool(rec["meta/cyclic"][0]), _untext(rec["meta/kind"]), params)


def save_acquisition(path, acq: Acquisition, coils: np.ndarray, cyclic: bool) -> None:
    rec = {"kspace": acq.kspace, "zero_filled": acq.zero_filled, "coil_maps": coils,
           "meta/R": np.array([acq.R]), "meta/cyclic": np.array([cyclic], dtype=np.uint8)}
    if acq.radial:
        tr = acq.sampling
        rec.update({"radial/angles": tr.angles, "radial/coords": tr.coords, "radial/dcf": tr.dcf,
                    "radial/samples": np.array([tr.samples_per_spoke], dtype=np.float64)})
    else:
        rec.update({"cartesian/lines": acq.sampling.lines.astype(np.uint8),
                    "cartesian/requested_R": np.array([acq.sampling.requested_R])})
    write_arrays(path, rec, lossy_complex=True)


def load_acquisition(path) -> tuple:
    """Returns ``(acquisition, coil_maps, cyclic)``."""
    rec = read_arrays(path)
    _need(rec, path, "kspace", "zero_filled", "coil_maps", "meta/R")
    if "radial/coords" in rec:
        sampling = RadialTrajectory(rec["radial/angles"], int(rec["radial/samples"][0]),
                                    rec["radial/coords"], rec["radial/dcf"])
    elif "cartesian/lines" in rec:
        sampling = CartesianMask(rec["cartesian/lines"].astype(bool), float(rec["cartesian/requested_R"][0]))
    else:
        raise ValueError(f"{path}: no sampling pattern records")
    acq = Acquisition(rec["kspace"].astype(np.complex128), sampling,
                      rec["zero_filled"].astype(np.complex128), float(rec["meta/R"][0]))
    return acq, rec["coil_maps"].astype(np.complex128), bool(rec["meta/cyclic"][0])


def flow_name(t: int, tau: int) -> str:
    return f"u/{t}/{tau}"


def save_flows(path, flows: dict) -> None:
    """``flows[(t, tau)] = u_{t->tau}`` as one record per ordered pair."""
    write_arrays(path, {flow_name(t, tau): np.asarray(u, dtype=np.float64) for (t, tau), u in flows.items()})


def load_flows(path) -> dict:
    out = {}
    for k, v in read_arrays(path).items():
        parts = k.split("/")
        if len(parts) != 3 or parts[0] != "u":
            raise ValueError(f"{path}: unexpected record {k!r} in flow file")
        out[(int(parts[1]), int(parts[2]))] = v
    return out

"""Synthetic dynamic phantoms with closed-form ground-truth motion.

Cardiac scenes deform a reference image with a radial map
``p -> c + (p - c) * sqrt(lam / (1 + q (lam - 1)))`` applied inside the unit
ellipse ``q < 1`` (identity outside). In terms of ``w = q / (1 - q)`` the map is
``w -> lam * w``, so maps compose by multiplying ``lam`` and every pairwise
flow, inverse and Jacobian is available exactly.

Flow convention everywhere: ``frame_tau(x) = frame_t(x + u_{t->tau}(x))``;
``u[0]`` is the column (x) component and ``u[1]`` the row (y) component.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mri.coils import make_coil_maps

LV_RADIUS = 0.45
MYO_RADIUS = 0.68
MAX_DISPLACEMENT = 5.5


@dataclass
class PhantomScene:
    frames: np.ndarray                 # (F, H, W) complex
    gt_flows: np.ndarray               # (F, F, 2, H, W), gt_flows[t, tau] = u_{t->tau}
    masks: dict                        # name -> (F, H, W) bool
    coil_maps: np.ndarray              # (Nc, H, W) complex
    seed: int
    cyclic: bool
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple:
        return self.frames.shape[1:]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)


def _smoothstep(s: np.ndarray) -> np.ndarray:
    """Soft 0->1 edge; ``s`` is a signed distance in pixels (positive inside)."""
    return 1.0 / (1.0 + np.exp(-np.clip(s / 0.35, -50, 50)))


def _texture(rng: np.random.Generator, n_terms: int = 12, max_freq: float = 3.0):
    freqs = rng.uniform(-max_freq, max_freq, size=(n_terms, 2))
    phases = rng.uniform(0, 2 * np.pi, size=n_terms)
    amps = rng.uniform(0.5, 1.0, size=n_terms)
    amps /= amps.sum()

    def field_at(y: np.ndarray, x: np.ndarray, size: float) -> np.ndarray:
        arg = 2 * np.pi * (freqs[:, 0, None, None] * y + freqs[:, 1, None, None] * x) / size
        return (amps[:, None, None] * np.cos(arg + phases[:, None, None])).sum(0)

    return field_at


def _radial_map(y, x, cy, cx, ay, ax, lam):
    """Apply the logistic radial map with parameter ``lam``; returns (y', x')."""
    dy, dx = y - cy, x - cx
    q = (dy / ay) ** 2 + (dx / ax) ** 2
    f = np.where(q < 1.0, np.sqrt(lam / (1.0 + np.minimum(q, 1.0) * (lam - 1.0))), 1.0)
    return cy + dy * f, cx + dx * f


def _max_radial_displacement(a: float, lam: float) -> float:
    rho = np.linspace(0, 1, 2001)
    return float(np.max(np.abs(a * rho * (np.sqrt(lam / (1 + rho ** 2 * (lam - 1))) - 1))))


def _grid(H: int, W: int):
    return np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")


def _check_dims(H, W, frames, min_frames):
    if H % 8 or W % 8 or H < 16 or W < 16:
        raise ValueError(f"phantom dims must be multiples of 8 and >= 16, got {H}x{W}")
    if frames < min_frames:
        raise ValueError(f"need at least {min_frames} frames, got {frames}")


def make_cardiac_phantom(H: int = 64, W: int = 64, frames: int = 16, seed: int = 0,
                         n_coils: int = 8) -> PhantomScene:
    """Contracting two-ventricle phantom with a static textured background.

    Peak contraction is at mid-cycle and the sequence is periodic.
    """
    _check_dims(H, W, frames, 4)
    rng = np.random.default_rng(seed)
    size = float(min(H, W))
    cy = H / 2 + rng.uniform(-0.03, 0.03) * H
    cx = W / 2 + rng.uniform(0.0, 0.05) * W
    a = 0.36 * size * rng.uniform(0.92, 1.08)
    ay, ax = a * rng.uniform(0.9, 1.0), a * rng.uniform(0.9, 1.0)
    lam_max = 3.0
    while _max_radial_displacement(max(ay, ax), lam_max) > MAX_DISPLACEMENT:
        lam_max = 1.0 + 0.95 * (lam_max - 1.0)
    lam_max *= rng.uniform(0.85, 1.0)
    tex = _texture(rng)
    phase_tex = _texture(rng, n_terms=4, max_freq=1.0)
    rv_cx = cx - 0.62 * ax
    rv_ay, rv_ax = 0.78 * ay, 0.42 * ax
    blood, myo, rv_int = 1.0, 0.3 + rng.uniform(-0.03, 0.03), 0.85

    def reference(yr, xr):
        rho = np.sqrt(((yr - cy) / ay) ** 2 + ((xr - cx) / ax) ** 2)
        img = 0.16 + 0.1 * tex(yr, xr, size)
        rv_rho = np.sqrt(((yr - cy) / rv_ay) ** 2 + ((xr - rv_cx) / rv_ax) ** 2)
        rv_in = _smoothstep((1.0 - rv_rho) * rv_ax) * _smoothstep((rho - (MYO_RADIUS + 0.06)) * a)
        img = img * (1 - rv_in) + rv_int * rv_in
        heart = _smoothstep((MYO_RADIUS - rho) * a)
        img = img * (1 - heart) + myo * heart
        lv = _smoothstep((LV_RADIUS - rho) * a)
        img = img * (1 - lv) + blood * lv
        phase = 0.3 * phase_tex(yr, xr, size)
        lv_mask = rho < LV_RADIUS
        rv_mask = (rv_rho < 1.0) & (rho >= MYO_RADIUS + 0.06)
        return img * np.exp(1j * phase), lv_mask, rv_mask

    yy, xx = _grid(H, W)
    t = np.arange(frames)
    lam = np.exp(np.log(lam_max) * (1 - np.cos(2 * np.pi * t / frames)) / 2)
    imgs = np.empty((frames, H, W), dtype=np.complex128)
    lv = np.empty((frames, H, W), dtype=bool)
    rv = np.empty_like(lv)
    for k in range(frames):
        yr, xr = _radial_map(yy, xx, cy, cx, ay, ax, lam[k])
        imgs[k], lv[k], rv[k] = reference(yr, xr)
    flows = np.empty((frames, frames, 2, H, W))
    for i in range(frames):
        for j in range(frames):
            ys, xs = _radial_map(yy, xx, cy, cx, ay, ax, lam[j] / lam[i])
            flows[i, j, 0] = xs - xx
            flows[i, j, 1] = ys - yy
            if i == j:
                flows[i, j] = 0.0
    params = dict(cy=cy, cx=cx, ay=ay, ax=ax, lam=lam)
    return PhantomScene(imgs, flows, {"lv": lv, "rv": rv}, make_coil_maps(H, W, n_coils),
                        seed, True, "cardiac", params)


def cardiac_jacobian_det(scene: PhantomScene, t: int, tau: int) -> np.ndarray:
    """Closed-form determinant of d(x + u_{t->tau})/dx on the pixel grid."""
    p = scene.params
    lam = p["lam"][tau] / p["lam"][t]
    yy, xx = _grid(*scene.shape)
    q = ((yy - p["cy"]) / p["ay"]) ** 2 + ((xx - p["cx"]) / p["ax"]) ** 2
    return np.where(q < 1.0, lam / (1.0 + np.minimum(q, 1.0) * (lam - 1.0)) ** 2, 1.0)


def make_respiratory_phantom(H: int = 64, W: int = 64, bins: int = 4, seed: int = 0,
                             n_coils: int = 8) -> PhantomScene:
    """Liver/diaphragm phantom moving superior-inferior with mild shear.

    Bins run from end-expiration (0) to end-inspiration (bins - 1) and the
    sequence is not periodic.
    """
    _check_dims(H, W, bins, 2)
    rng = np.random.default_rng(seed)
    size = float(min(H, W))
    cy, cx = H / 2, W / 2
    disp = rng.uniform(4.0, 5.5)
    shear = rng.uniform(0.02, 0.04)
    d = disp * np.arange(bins) / (bins - 1)
    s = shear * np.arange(bins) / (bins - 1)
    tex = _texture(rng)
    vessels = rng.uniform([0.55, 0.25], [0.8, 0.75], size=(5, 2)) * [H, W]
    dome_y0 = 0.42 * H + rng.uniform(-2, 2)
    body_ay, body_ax = 0.46 * H, 0.44 * W

    def reference(yr, xr):
        body = _smoothstep((1 - np.sqrt(((yr - cy) / body_ay) ** 2 + ((xr - cx) / body_ax) ** 2)) * body_ax)
        dome = dome_y0 + 0.5 * ((xr - cx) / W) ** 2 * H
        liver = _smoothstep(yr - dome) * body
        lung = (1 - liver) * body
        img = 0.03 + 0.05 * tex(yr, xr, size)
        img = img * (1 - body) + (0.25 + 0.08 * tex(yr, xr, size)) * body
        img = img * (1 - lung * 0.85)
        img = img * (1 - liver) + (0.7 + 0.08 * tex(yr, xr, size)) * liver
        for vy, vx in vessels:
            v = _smoothstep((2.0 - np.hypot(yr - vy, xr - vx))) * liver
            img = img * (1 - v) + 0.95 * v
        return img.astype(np.complex128), (yr > dome) & (body > 0.5)

    yy, xx = _grid(H, W)
    imgs = np.empty((bins, H, W), dtype=np.complex128)
    liver = np.empty((bins, H, W), dtype=bool)
    for b in range(bins):
        imgs[b], liver[b] = reference(yy - d[b], xx - s[b] * (yy - cy))
    flows = np.empty((bins, bins, 2, H, W))
    for i in range(bins):
        for j in range(bins):
            flows[i, j, 1] = d[i] - d[j]
            flows[i, j, 0] = (s[i] - s[j]) * (yy - cy) + s[i] * (d[i] - d[j])
    params = dict(d=d, s=s)
    return PhantomScene(imgs, flows, {"liver": liver}, make_coil_maps(H, W, n_coils),
                        seed, False, "respiratory", params)

"""Motion-compensated iterative SENSE.

The image of target frame ``t`` is warped into every frame ``tau`` of a
window, sampled with that frame's operator, and all frames are fitted jointly
in least squares:

    E = [A_tau U_{t->tau}]_tau,   solve E^H E x = E^H m  by conjugate gradients.

``U_{t->tau}`` is the bilinear warp ``(U x)(p) = x(p + u_{t->tau}(p))`` with the
same edge-clamped interpolation used by the registration loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mri.cartesian import CartesianMask, adjoint_cartesian, forward_cartesian
from .mri.radial import RadialTrajectory, nufft_adjoint, nufft_forward


class WarpOperator:
    """Sparse bilinear warp by a fixed flow ``u`` of shape (2, H, W), (x, y) order."""

    def __init__(self, u: np.ndarray):
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 3 or u.shape[0] != 2:
            raise ValueError(f"flow must have shape (2, H, W), got {u.shape}")
        _, H, W = u.shape
        self.shape = (H, W)
        yy, xx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
        cx = np.clip(xx + u[0], 0, W - 1).ravel()
        cy = np.clip(yy + u[1], 0, H - 1).ravel()
        x0 = np.minimum(np.floor(cx), max(W - 2, 0)).astype(np.int64)
        y0 = np.minimum(np.floor(cy), max(H - 2, 0)).astype(np.int64)
        wx, wy = cx - x0, cy - y0
        x1, y1 = np.minimum(x0 + 1, W - 1), np.minimum(y0 + 1, H - 1)
        self.index = np.stack([y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1])
        self.weight = np.stack([(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx])
        self.identity = not np.any(u)

    def apply(self, img: np.ndarray) -> np.ndarray:
        if img.shape[-2:] != self.shape:
            raise ValueError(f"image {img.shape} does not match flow {self.shape}")
        if self.identity:
            return img.copy()
        flat = img.reshape(img.shape[:-2] + (-1,))
        out = (flat[..., self.index] * self.weight).sum(axis=-2)
        return out.reshape(img.shape)

    def adjoint(self, img: np.ndarray) -> np.ndarray:
        if img.shape != self.shape:
            raise ValueError(f"image {img.shape} does not match flow {self.shape}")
        if self.identity:
            return img.copy()
        n = self.shape[0] * self.shape[1]
        idx = self.index.ravel()
        w = (self.weight * img.ravel()[None]).ravel()
        re = np.bincount(idx, weights=w.real, minlength=n)
        if np.iscomplexobj(img):
            return (re + 1j * np.bincount(idx, weights=w.imag, minlength=n)).reshape(self.shape)
        return re.reshape(self.shape)


def motion_apply(img: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Warp a real or complex image: ``out(p) = img(p + u(p))``."""
    return WarpOperator(u).apply(img)


def motion_apply_adjoint(img: np.ndarray, u: np.ndarray) -> np.ndarray:
    return WarpOperator(u).adjoint(img)


@dataclass
class MotionSet:
    """Flows ``u_{t->tau}`` for every ``tau`` in the window of target frame ``t``."""

    t: int
    taus: tuple
    flows: np.ndarray                  # (len(taus), 2, H, W)

    def __post_init__(self):
        self.taus = tuple(int(k) for k in self.taus)
        self.flows = np.asarray(self.flows, dtype=np.float64)
        if self.flows.shape[0] != len(self.taus):
            raise ValueError(f"{len(self.taus)} window frames but {self.flows.shape[0]} flows")
        if len(set(self.taus)) != len(self.taus):
            raise ValueError(f"window frames must be unique, got {self.taus}")
        if self.t in self.taus and np.any(self.flows[self.taus.index(self.t)]):
            raise ValueError("flow from the target frame to itself must be zero")

    @property
    def T(self) -> int:
        return max((abs(k - self.t) for k in self.taus), default=0)


def as_sampling(sampling):
    """Per-frame masks indexable by frame; a :class:`CartesianMask` becomes (F, n_ky) lines."""
    if isinstance(sampling, CartesianMask):
        return sampling.lines.T
    return sampling


def window_frames(t: int, T: int, n_frames: int, cyclic: bool) -> tuple:
    """Frames ``t-T..t+T`` wrapped (cyclic) or clipped to the sequence, without repeats."""
    if T < 0:
        raise ValueError(f"window half-width must be >= 0, got {T}")
    out = []
    for k in range(t - T, t + T + 1):
        if cyclic:
            k %= n_frames
        elif not 0 <= k < n_frames:
            continue
        if k not in out:
            out.append(k)
    return tuple(out)


def motion_set_from_flows(flows: np.ndarray, t: int, T: int, cyclic: bool) -> MotionSet:
    """Build a window from an all-pairs array ``flows[t, tau] = u_{t->tau}``."""
    taus = window_frames(t, T, flows.shape[0], cyclic)
    return MotionSet(t, taus, np.stack([flows[t, k] for k in taus]))


@dataclass
class ReconProblem:
    """Measured data of all frames plus the motion window of one target frame.

    ``kspace[tau]`` is (Nc, H, W) masked Cartesian data or (Nc, M) radial
    samples. ``sampling`` is either an array of per-frame masks (lines or
    2-D) or a :class:`RadialTrajectory`.
    """

    kspace: list
    coils: np.ndarray
    sampling: object
    motion: MotionSet
    _warps: list = field(default=None, repr=False)

    def __post_init__(self):
        self.sampling = as_sampling(self.sampling)
        F = len(self.kspace)
        for k in self.motion.taus:
            if not 0 <= k < F or self.kspace[k] is None:
                raise ValueError(f"window frame {k} has no k-space data")
            if not self.radial and (k >= len(self.sampling) or self.sampling[k] is None):
                raise ValueError(f"window frame {k} has no sampling mask")
        if self.motion.flows.shape[-2:] != self.shape:
            raise ValueError(f"flows {self.motion.flows.shape} do not match image {self.shape}")
        self._warps = [WarpOperator(u) for u in self.motion.flows]

    @property
    def radial(self) -> bool:
        return isinstance(self.sampling, RadialTrajectory)

    @property
    def shape(self) -> tuple:
        return self.coils.shape[-2:]

    @property
    def t(self) -> int:
        return self.motion.t

    def _weight(self, k: int):
        # radial rows carry sqrt(dcf) so that E^H E stays Hermitian while the
        # normal equations see density-compensated data
        return np.sqrt(self.sampling.dcf[k])

    def frame_forward(self, img: np.ndarray, k: int) -> np.ndarray:
        if self.radial:
            return nufft_forward(img, self.coils, self.sampling.coords[k]) * self._weight(k)
        return forward_cartesian(img, self.coils, self.sampling[k])

    def frame_adjoint(self, ksp: np.ndarray, k: int) -> np.ndarray:
        if self.radial:
            return nufft_adjoint(ksp * self._weight(k), self.coils, self.sampling.coords[k])
        return adjoint_cartesian(ksp, self.coils, self.sampling[k])

    def measured(self) -> list:
        if self.radial:
            return [self.kspace[k] * self._weight(k) for k in self.motion.taus]
        return [self.kspace[k] for k in self.motion.taus]


def system_forward(img: np.ndarray, prob: ReconProblem) -> list:
    """Stacked ``[A_tau U_{t->tau} img]`` over the window."""
    return [prob.frame_forward(w.apply(img), k) for w, k in zip(prob._warps, prob.motion.taus)]


def system_adjoint(ksp: list, prob: ReconProblem) -> np.ndarray:
    out = np.zeros(prob.shape, dtype=np.complex128)
    for w, k, m in zip(prob._warps, prob.motion.taus, ksp):
        out += w.adjoint(prob.frame_adjoint(m, k))
    return out


def _stack_norm(ksp: list) -> float:
    return float(np.sqrt(sum(np.vdot(m, m).real for m in ksp)))


@dataclass
class CGResult:
    image: np.ndarray
    iterations: int
    residuals: list           # data residual ||m - E x|| after each iterate, starting at x = 0
    normal_residuals: list    # ||E^H m - E^H E x|| / ||E^H m||
    converged: bool


def cg_sense(prob: ReconProblem, max_iter: int = 20, tol: float = 1e-6,
             return_info: bool = False):
    """Conjugate gradients on the normal equations of the stacked system (CGNR)."""
    m = prob.measured()
    b = system_adjoint(m, prob)
    x = np.zeros(prob.shape, dtype=np.complex128)
    r = b.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    bnorm = np.sqrt(rr)
    data_res = [_stack_norm(m)]
    normal_res = [1.0]
    converged = bnorm == 0.0
    it = 0
    while not converged and it < max_iter:
        Ep = system_forward(p, prob)
        q = system_adjoint(Ep, prob)
        pq = np.vdot(p, q).real
        if not np.isfinite(pq) or pq <= 0:
            if not np.isfinite(pq):
                raise FloatingPointError(f"cg_sense: non-finite curvature at iteration {it + 1}")
            break
        a = rr / pq
        x = x + a * p
        r = r - a * q
        rr_new = np.vdot(r, r).real
        it += 1
        if not np.isfinite(rr_new):
            raise FloatingPointError(f"cg_sense: non-finite residual at iteration {it}")
        data_res.append(_stack_norm([mi - ei for mi, ei in zip(m, system_forward(x, prob))]))
        normal_res.append(float(np.sqrt(rr_new) / bnorm))
        if normal_res[-1] < tol:
            converged = True
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    result = CGResult(x, it, data_res, normal_res, converged)
    return result if return_info else x


def zero_filled(kspace: np.ndarray, coils: np.ndarray, sampling, t: int) -> np.ndarray:
    """Single-frame adjoint reconstruction ``A_t^H m_t`` (density-compensated for radial)."""
    if isinstance(sampling, RadialTrajectory):
        return nufft_adjoint(kspace, coils, sampling.coords[t], sampling.dcf[t])
    return adjoint_cartesian(kspace, coils, as_sampling(sampling)[t])


def recon_cycle(kspace: list, coils: np.ndarray, sampling, flows, T: int = 6,
                cyclic: bool = True, max_iter: int = 20, tol: float = 1e-6) -> np.ndarray:
    """Reconstruct every frame with its own motion-compensated window.

    ``flows`` is an all-pairs array ``flows[t, tau] = u_{t->tau}`` or a
    callable ``flows(t, tau) -> (2, H, W)``; ``None`` means no motion.
    """
    F = len(kspace)
    H, W = coils.shape[-2:]
    sampling = as_sampling(sampling)
    out = np.empty((F, H, W), dtype=np.complex128)
    for t in range(F):
        taus = window_frames(t, T, F, cyclic)
        if flows is None:
            u = np.zeros((len(taus), 2, H, W))
        elif callable(flows):
            u = np.stack([np.zeros((2, H, W)) if k == t else flows(t, k) for k in taus])
        else:
            u = np.stack([flows[t, k] for k in taus])
        prob = ReconProblem(kspace, coils, sampling, MotionSet(t, taus, u))
        out[t] = cg_sense(prob, max_iter=max_iter, tol=tol)
    return out

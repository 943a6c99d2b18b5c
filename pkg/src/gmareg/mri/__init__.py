"""Simulated MR acquisition: coils, Cartesian and radial sampling operators."""
from .cartesian import (N_CENTER_LINES, CartesianMask, adjoint_cartesian, forward_cartesian,
                        make_vista_mask)
from .coils import make_coil_maps, rss
from .fft import fft2c, ifft2c
from .radial import (GOLDEN_ANGLE_DEG, GriddingNufft, RadialTrajectory, dcf_ramp,
                     make_golden_angle, nufft_adjoint, nufft_forward, nyquist_spokes,
                     radial_acceleration, spokes_for_acceleration)

__all__ = [
    "N_CENTER_LINES", "CartesianMask", "adjoint_cartesian", "forward_cartesian",
    "make_vista_mask", "make_coil_maps", "rss", "fft2c", "ifft2c", "GOLDEN_ANGLE_DEG",
    "GriddingNufft", "RadialTrajectory", "dcf_ramp", "make_golden_angle", "nufft_adjoint",
    "nufft_forward", "nyquist_spokes", "radial_acceleration", "spokes_for_acceleration",
]

"""Regularized Ambisonics encoding for rigid-sphere arrays and its effect on DOA estimation."""

__version__ = "0.1.0"

from .encoder import (  # noqa: E402
    ArrayGeometry,
    Encoder,
    RegularizationProfile,
    encode,
    lambda_for_snr,
    load_geometry,
    noise_gain,
    plane_wave_distortion,
    tikhonov_gains,
)
from .sh import Direction, SHVector, plane_wave_coeffs, radial_rigid, sh_matrix  # noqa: E402

__all__ = [
    "ArrayGeometry",
    "Direction",
    "Encoder",
    "RegularizationProfile",
    "SHVector",
    "encode",
    "lambda_for_snr",
    "load_geometry",
    "noise_gain",
    "plane_wave_coeffs",
    "plane_wave_distortion",
    "radial_rigid",
    "sh_matrix",
    "tikhonov_gains",
]

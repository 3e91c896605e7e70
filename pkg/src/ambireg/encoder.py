"""Regularized plane-wave decomposition for rigid-sphere arrays.

The encoding operator at one frequency is ``C (Y B)^+``: ``Y`` is the SH
matrix of the microphone directions, ``B`` the diagonal of rigid-sphere
radial functions and ``C`` a diagonal, per-order regularization.
"""

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .sh import (
    Direction,
    RadialFunctions,
    SHVector,
    num_coeffs,
    order_of_acn,
    radial_all,
    sh_matrix,
)

SPEED_OF_SOUND = 343.0

# log-linear anchors for the lambda <-> SNR mapping: (snr_db, lambda)
SNR_LAMBDA_ANCHORS = ((5.0, 1.5), (10.0, 0.5), (20.0, 0.05))
LAMBDA_CLAMP = (0.0, 3.0)


class IllConditionedError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphones on a rigid sphere.

    ``mic_dirs`` is a ``(Q, 2)`` array of (elevation, azimuth) in radians.
    """

    radius: float
    mic_dirs: np.ndarray
    sphere: str = "rigid"

    def __post_init__(self):
        dirs = np.atleast_2d(np.asarray(self.mic_dirs, dtype=float))
        if dirs.ndim != 2 or dirs.shape[1] != 2 or len(dirs) == 0:
            raise ValueError("mic_dirs must be a non-empty (Q, 2) array")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.sphere != "rigid":
            raise ValueError("only rigid spheres are supported")
        object.__setattr__(self, "mic_dirs", dirs)

    @property
    def num_mics(self):
        return len(self.mic_dirs)

    @property
    def directions(self):
        return [Direction(t, p) for t, p in self.mic_dirs]

    def positions(self, center=(0.0, 0.0, 0.0)):
        th, ph = self.mic_dirs.T
        unit = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
        return np.asarray(center) + self.radius * unit


def load_geometry(path=None):
    """Read an array layout file.

    The format is plain text: ``#`` comments, a ``radius <metres>`` line and
    one ``elevation_deg azimuth_deg`` pair per microphone. ``None`` or
    ``"builtin"`` loads the shipped 32-microphone, 4.2 cm layout.
    """
    if path is None or str(path) == "builtin":
        text = resources.files("ambireg").joinpath("data/rigid32.txt").read_text()
        source = "builtin"
    else:
        text = Path(path).read_text()
        source = str(path)
    radius = None
    dirs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0].lower() == "radius":
                radius = float(parts[1])
            elif len(parts) == 2:
                dirs.append((float(parts[0]), float(parts[1])))
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise ValueError(f"{source}:{lineno}: cannot parse {raw!r}") from None
    if radius is None:
        raise ValueError(f"{source}: missing 'radius' line")
    return ArrayGeometry(radius, np.deg2rad(np.array(dirs)))


def save_geometry(geom, path):
    lines = [f"radius {float(geom.radius)!r}"]
    lines += [f"{float(t)!r} {float(p)!r}" for t, p in np.rad2deg(geom.mic_dirs)]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class RegularizationProfile:
    kind: str = "tikhonov"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")

    def gains(self, radial):
        return REGULARIZERS[self.kind](radial, self.lam)


def tikhonov_gains(radial, lam):
    """Per-order Tikhonov gains ``|b_n|^2 / (|b_n|^2 + lam^2)``.

    ``radial`` is a :class:`RadialFunctions` or an array of ``b_n`` values
    (orders along the first axis).
    """
    values = radial.values if isinstance(radial, RadialFunctions) else radial
    mag2 = np.abs(np.asarray(values)) ** 2
    if lam == 0:
        return np.ones_like(mag2)
    return mag2 / (mag2 + lam * lam)


REGULARIZERS = {"tikhonov": tikhonov_gains}


def plane_wave_distortion(gains):
    """Distortion of a unit plane wave for per-order gains (any direction).

    The addition theorem reduces ``||(C - I) a||^2 / ||a||^2`` to
    ``sum_n (2n+1) (1 - c_n)^2 / (N+1)^2``. Orders run along the first axis.
    """
    gains = np.asarray(gains, dtype=float)
    order = gains.shape[0] - 1
    w = (2 * np.arange(order + 1) + 1).reshape((-1,) + (1,) * (gains.ndim - 1))
    return np.sum(w * (1 - gains) ** 2, axis=0) / num_coeffs(order)


def distortion(gains, a):
    """``||(C - I) a||^2 / ||a||^2`` for a diagonal, per-order ``C``."""
    coeffs = a.coeffs if isinstance(a, SHVector) else np.asarray(a)
    order = int(round(np.sqrt(coeffs.shape[0]))) - 1
    den = np.sum(np.abs(coeffs) ** 2)
    if den == 0:
        raise ValueError("distortion is undefined for a zero SH vector")
    c = np.asarray(gains, dtype=float)[order_of_acn(order)]
    return float(np.sum(np.abs((c - 1) * coeffs) ** 2) / den)


@dataclass(frozen=True)
class EncodingOperator:
    frequency: float
    order: int
    matrix: np.ndarray
    gains: np.ndarray
    radial: np.ndarray
    dist_pw: float
    noise_gain: float
    reg: RegularizationProfile = field(default_factory=RegularizationProfile)

    @property
    def num_mics(self):
        return self.matrix.shape[1]


class Encoder:
    """Encoding operators for one geometry and SH order.

    ``Y^+`` is computed once; per-frequency operators only rescale its rows
    by ``c_n / b_n``.
    """

    def __init__(self, geom, order, c=SPEED_OF_SOUND):
        if geom.num_mics < num_coeffs(order):
            raise ValueError(
                f"order {order} needs at least {num_coeffs(order)} microphones, got {geom.num_mics}"
            )
        self.geom = geom
        self.order = order
        self.c = c

    @cached_property
    def Y(self):
        return sh_matrix(self.geom.mic_dirs, self.order)

    @cached_property
    def Y_pinv(self):
        U, s, Vh = np.linalg.svd(self.Y, full_matrices=False)
        if s[-1] < 1e-8 * s[0]:
            raise IllConditionedError(
                f"SH matrix is ill-conditioned (sigma_min/sigma_max = {s[-1] / s[0]:.3g})"
            )
        return (Vh.conj().T / s) @ U.conj().T

    def kr(self, freqs):
        return 2 * np.pi * np.asarray(freqs, dtype=float) / self.c * self.geom.radius

    def radial(self, freqs):
        """``b_n`` on a frequency grid, shape ``(order+1, F)``."""
        return radial_all(self.order, self.kr(np.atleast_1d(freqs)))

    def gains(self, freqs, reg):
        return reg.gains(self.radial(freqs))

    def matrices(self, freqs, reg):
        """Stacked operators ``C (Y B)^+`` of shape ``(F, (N+1)^2, Q)``."""
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        if np.any(freqs <= 0):
            raise ValueError("frequencies must be positive")
        b = self.radial(freqs)
        scale = (reg.gains(b) / b)[order_of_acn(self.order)]
        return scale.T[:, :, None] * self.Y_pinv[None]

    def operator(self, frequency, reg):
        if frequency <= 0:
            raise ValueError("frequency must be positive")
        b = self.radial([frequency])[:, 0]
        gains = reg.gains(b)
        M = self.matrices([frequency], reg)[0]
        return EncodingOperator(
            frequency=float(frequency),
            order=self.order,
            matrix=M,
            gains=gains,
            radial=b,
            dist_pw=float(plane_wave_distortion(gains)),
            noise_gain=float(np.sum(np.abs(M) ** 2) / M.shape[1]),
            reg=reg,
        )

    def noise_gains(self, freqs, reg):
        """Closed-form ``G_noise`` on a frequency grid."""
        b = self.radial(freqs)
        g2 = np.abs(reg.gains(b) / b) ** 2
        # ||diag(s) Y^+||_F^2 = sum_acn s_acn^2 ||row_acn(Y^+)||^2
        row2 = np.sum(np.abs(self.Y_pinv) ** 2, axis=1)
        return (row2 @ g2[order_of_acn(self.order)]) / self.geom.num_mics

    def plane_wave_distortions(self, freqs, reg):
        return plane_wave_distortion(self.gains(freqs, reg))


def build_encoder(geom, order, frequency, reg, c=SPEED_OF_SOUND):
    """Regularized PWD operator at a single frequency."""
    return Encoder(geom, order, c).operator(frequency, reg)


def encode(op, mic_frame):
    """Apply ``C (Y B)^+`` to one vector of microphone spectra."""
    p = np.asarray(mic_frame)
    if p.shape != (op.num_mics,):
        raise ValueError(f"expected {op.num_mics} microphone values, got shape {p.shape}")
    return SHVector(op.order, op.matrix @ p)


def noise_gain(op):
    """``E||M n||^2 / E||n||^2`` for white i.i.d. noise, i.e. ``||M||_F^2 / Q``."""
    return float(np.sum(np.abs(op.matrix) ** 2) / op.matrix.shape[1])


def lambda_for_snr(snr_db):
    """Regularization level for a given SNR.

    Log-linear interpolation of ``log(lambda)`` against SNR through the
    anchors (5 dB, 1.5), (10 dB, 0.5), (20 dB, 0.05), extrapolated with the
    end slopes and clamped to ``[0, 3]``.
    """
    snr = np.asarray(snr_db, dtype=float)
    if not np.all(np.isfinite(snr)):
        raise ValueError("snr_db must be finite")
    xs = np.array([a[0] for a in SNR_LAMBDA_ANCHORS])
    ys = np.log(np.array([a[1] for a in SNR_LAMBDA_ANCHORS]))
    seg = np.clip(np.searchsorted(xs, snr) - 1, 0, len(xs) - 2)
    slope = (ys[seg + 1] - ys[seg]) / (xs[seg + 1] - xs[seg])
    lam = np.exp(ys[seg] + slope * (snr - xs[seg]))
    # exact at the anchors
    for x, y in SNR_LAMBDA_ANCHORS:
        lam = np.where(snr == x, y, lam)
    lam = np.clip(lam, *LAMBDA_CLAMP)
    return float(lam) if lam.ndim == 0 else lam

"""SH-domain MUSIC over a near-uniform spherical grid."""

import csv
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sh import Direction, num_coeffs, sh_matrix

GAP_TOL = 1e-9
TIE_TOL = 1e-12


class RankDeficiencyWarning(RuntimeWarning):
    pass


def fibonacci_directions(count):
    """``count`` near-uniform (theta, phi) pairs on the sphere, in radians."""
    i = np.arange(count)
    z = 1 - (2 * i + 1) / count
    golden = np.pi * (3 - np.sqrt(5))
    return np.stack([np.arccos(z), np.mod(golden * i, 2 * np.pi)], axis=1)


@dataclass(frozen=True)
class SteeringGrid:
    """Candidate directions and their steering vectors ``conj(y(Omega))``."""

    order: int
    resolution_deg: float = 2.0

    @cached_property
    def dirs(self):
        res = np.deg2rad(self.resolution_deg)
        return fibonacci_directions(int(np.ceil(4 * np.pi / res**2)))

    @cached_property
    def steering(self):
        return np.conj(sh_matrix(self.dirs, self.order))

    @property
    def size(self):
        return len(self.dirs)

    @property
    def steering_norm2(self):
        # |y(Omega)|^2 is direction independent
        return num_coeffs(self.order) / (4 * np.pi)

    def direction(self, index):
        return Direction(*self.dirs[index])

    def nearest(self, direction):
        u = direction.unit_vector()
        th, ph = self.dirs.T
        g = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
        return int(np.argmax(g @ u))


@dataclass(frozen=True)
class DOAEstimate:
    frame: int
    bin_hz: float
    direction: Direction
    peak: float


def music_spectrum(R, grid, num_sources=1):
    """MUSIC pseudo-spectrum ``1 / ||U_n^H v(Omega)||^2`` on the grid.

    When the eigenvalue gap between the signal and noise subspaces is below
    tolerance a :class:`RankDeficiencyWarning` is raised and the whole space
    is treated as noise, which gives a flat spectrum.
    """
    R = np.asarray(R)
    if R.shape != (num_coeffs(grid.order),) * 2:
        raise ValueError(f"R must be {num_coeffs(grid.order)}x{num_coeffs(grid.order)}")
    w, U = np.linalg.eigh(R)
    gap = w[-num_sources] - w[-num_sources - 1]
    if gap <= GAP_TOL * max(abs(w[-1]), 1e-300):
        warnings.warn("no eigenvalue gap between signal and noise subspaces", RankDeficiencyWarning)
        return np.full(grid.size, 1.0 / grid.steering_norm2)
    Us = U[:, -num_sources:]
    proj = np.sum(np.abs(grid.steering @ Us.conj()) ** 2, axis=1)
    return 1.0 / np.maximum(grid.steering_norm2 - proj, 1e-300)


def estimate_doa(spectrum, grid, frame=-1, bin_hz=float("nan")):
    """Grid argmax; near-equal maxima resolve to the smallest grid index."""
    spectrum = np.asarray(spectrum)
    top = spectrum.max()
    index = int(np.flatnonzero(spectrum >= top * (1 - TIE_TOL))[0])
    return DOAEstimate(frame, bin_hz, grid.direction(index), float(top))


def music_doa_batch(principal, grid, chunk=256):
    """Single-source MUSIC argmax for many bins at once.

    ``principal`` holds the top eigenvector of each bin's autocorrelation.
    With one source the noise-subspace norm is ``|v|^2 - |u^H v|^2``, so
    the peak is the grid direction maximizing ``|u^H v|``. Returns grid
    indices and peak values.
    """
    principal = np.atleast_2d(principal)
    idx = np.zeros(len(principal), dtype=int)
    peak = np.zeros(len(principal))
    for start in range(0, len(principal), chunk):
        U = principal[start : start + chunk]
        proj = np.abs(U.conj() @ grid.steering.T) ** 2
        best = np.argmax(proj, axis=1)
        idx[start : start + chunk] = best
        val = proj[np.arange(len(U)), best]
        peak[start : start + chunk] = 1.0 / np.maximum(grid.steering_norm2 - val, 1e-300)
    return idx, peak


def angle_errors_deg(est_theta, est_phi, theta, phi):
    """Per-estimate error term of the aggregate metric, in degrees.

    All angles in radians; azimuth differences are wrapped into (-180, 180].
    """
    dt = np.rad2deg(np.asarray(est_theta) - theta)
    dp = np.rad2deg(np.asarray(est_phi) - phi)
    dp = 180.0 - np.mod(180.0 - dp, 360.0)
    return np.sqrt(0.5 * (dt**2 + dp**2))


def doa_error(estimates, truth):
    """Mean over estimates of ``sqrt(((dtheta)^2 + (dphi)^2) / 2)``, in degrees."""
    if len(estimates) == 0:
        raise ValueError("no estimates to score")
    th = np.array([e.direction.theta for e in estimates])
    ph = np.array([e.direction.phi for e in estimates])
    return float(np.mean(angle_errors_deg(th, ph, truth.theta, truth.phi)))


def export_estimates(estimates, path, scores=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "bin_hz", "theta_deg", "phi_deg", "score"])
        for i, e in enumerate(estimates):
            th, ph = e.direction.degrees
            score = e.peak if scores is None else scores[i]
            w.writerow([e.frame, repr(float(e.bin_hz)), f"{th:.6f}", f"{ph:.6f}", repr(float(score))])

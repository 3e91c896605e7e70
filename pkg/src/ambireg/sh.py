"""Spherical harmonics and spherical special functions.

Complex orthonormal spherical harmonics with the Condon-Shortley phase,
flattened in ACN order (``acn = n**2 + n + m``). Angles follow the
(elevation-from-zenith ``theta``, azimuth ``phi``) convention, in radians.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Direction",
    "SHIndex",
    "SHVector",
    "RadialFunctions",
    "acn",
    "acn_to_nm",
    "num_coeffs",
    "order_of_acn",
    "sh_eval",
    "sh_matrix",
    "spherical_bessel_j",
    "spherical_bessel_y",
    "spherical_hankel2",
    "radial_all",
    "radial_rigid",
    "plane_wave_coeffs",
]

# below this argument j_n is evaluated by its power series
_SERIES_X = 1e-3
# extra orders above the requested one used to seed Miller's recurrence
_MILLER_PAD = 25

MAX_ORDER = 8


@dataclass(frozen=True)
class Direction:
    """A direction on the unit sphere.

    ``theta`` is the elevation measured from the zenith, in ``[0, pi]``;
    ``phi`` is the azimuth, normalized into ``[0, 2*pi)``.
    """

    theta: float
    phi: float

    def __post_init__(self):
        theta = float(self.theta)
        if not -1e-12 <= theta <= np.pi + 1e-12:
            raise ValueError(f"theta must lie in [0, pi], got {theta}")
        object.__setattr__(self, "theta", min(max(theta, 0.0), np.pi))
        object.__setattr__(self, "phi", float(np.mod(self.phi, 2 * np.pi)))

    @classmethod
    def from_degrees(cls, theta_deg, phi_deg):
        return cls(np.deg2rad(theta_deg), np.deg2rad(phi_deg))

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v)
        if r == 0:
            raise ValueError("zero vector has no direction")
        return cls(np.arccos(np.clip(v[2] / r, -1.0, 1.0)), np.arctan2(v[1], v[0]))

    @property
    def degrees(self):
        return np.rad2deg(self.theta), np.rad2deg(self.phi)

    def unit_vector(self):
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])


@dataclass(frozen=True)
class SHIndex:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 0 or abs(self.m) > self.n:
            raise ValueError(f"invalid SH index (n={self.n}, m={self.m})")

    @property
    def acn(self):
        return acn(self.n, self.m)

    @classmethod
    def from_acn(cls, index):
        return cls(*acn_to_nm(index))


@dataclass(frozen=True)
class SHVector:
    """Complex SH coefficients of order ``order`` in ACN order."""

    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (num_coeffs(self.order),):
            raise ValueError(
                f"order {self.order} needs {num_coeffs(self.order)} coefficients, got {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def norm(self):
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True)
class RadialFunctions:
    order: int
    kr: float
    values: np.ndarray


def acn(n, m):
    return n * n + n + m


def acn_to_nm(index):
    n = int(np.floor(np.sqrt(index)))
    return n, index - n * n - n


def num_coeffs(order):
    return (order + 1) ** 2


def order_of_acn(order):
    """Array mapping every ACN channel up to ``order`` to its SH order ``n``."""
    return np.concatenate([np.full(2 * n + 1, n) for n in range(order + 1)])


def _legendre_normalized(order, cos_theta, sin_theta):
    """Orthonormalized associated Legendre values for ``m >= 0``.

    Returns an array ``P[n, m, ...]`` such that
    ``Y_n^m = P[n, m] * exp(1j * m * phi)``, Condon-Shortley phase included.
    The normalization is folded into the recurrence so nothing overflows.
    """
    shape = np.shape(cos_theta)
    P = np.zeros((order + 1, order + 1) + shape)
    P[0, 0] = 1.0 / np.sqrt(4 * np.pi)
    for m in range(1, order + 1):
        P[m, m] = -np.sqrt((2 * m + 1) / (2 * m)) * sin_theta * P[m - 1, m - 1]
    for m in range(order):
        P[m + 1, m] = np.sqrt(2 * m + 3) * cos_theta * P[m, m]
    for m in range(order + 1):
        for n in range(m + 2, order + 1):
            a = np.sqrt((4 * n * n - 1) / (n * n - m * m))
            b = np.sqrt(((n - 1) ** 2 - m * m) / (4 * (n - 1) ** 2 - 1))
            P[n, m] = a * (cos_theta * P[n - 1, m] - b * P[n - 2, m])
    return P


def _sh_all(order, theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    P = _legendre_normalized(order, np.cos(theta), np.sin(theta))
    out = np.zeros((num_coeffs(order),) + np.broadcast(theta, phi).shape, dtype=complex)
    for n in range(order + 1):
        for m in range(n + 1):
            y = P[n, m] * np.exp(1j * m * phi)
            out[acn(n, m)] = y
            if m > 0:
                out[acn(n, -m)] = (-1) ** m * np.conj(y)
    return out


def sh_eval(idx, direction):
    """Evaluate ``Y_n^m`` at a single direction."""
    values = _sh_all(idx.n, direction.theta, direction.phi)
    return complex(values[idx.acn])


def sh_matrix(dirs, order):
    """SH matrix whose row ``q`` is ``[Y_0^0, Y_1^-1, ..., Y_N^N]`` at ``dirs[q]``.

    Parameters
    ----------
    dirs : sequence of Direction, or (Q, 2) array of (theta, phi) in radians
    order : int

    Returns
    -------
    (Q, (order+1)**2) complex ndarray
    """
    theta, phi = _angles(dirs)
    if theta.size == 0:
        raise ValueError("at least one direction is required")
    return _sh_all(order, theta, phi).T


def _angles(dirs):
    if isinstance(dirs, Direction):
        dirs = [dirs]
    if len(dirs) and isinstance(dirs[0], Direction):
        theta = np.array([d.theta for d in dirs])
        phi = np.array([d.phi for d in dirs])
    else:
        arr = np.atleast_2d(np.asarray(dirs, dtype=float))
        theta, phi = arr[:, 0], arr[:, 1]
    return theta, phi


def plane_wave_coeffs(direction, order):
    """SH coefficients of a unit-amplitude plane wave arriving from ``direction``."""
    return SHVector(order, np.conj(sh_matrix([direction], order)[0]))


# --- spherical Bessel family -------------------------------------------------


def _check_order(order):
    if order < 0:
        raise ValueError("order must be non-negative")


def _j_series(n, x):
    # j_n(x) = x^n/(2n+1)!! * (1 - x^2/(2(2n+3)) + x^4/(8(2n+3)(2n+5)) - ...)
    dfact = np.prod(np.arange(1, 2 * n + 2, 2, dtype=float))
    x2 = x * x
    s = 1 - x2 / (2 * (2 * n + 3)) * (1 - x2 / (4 * (2 * n + 5)) * (1 - x2 / (6 * (2 * n + 7))))
    return x**n / dfact * s


def _j_all(order, x):
    """``j_n(x)`` for ``n = 0..order``; x is a 1-D array of non-negative values."""
    work = max(order, 1)
    out = np.zeros((work + 1, x.size))
    small = x < _SERIES_X
    up = (x >= work) & ~small
    down = ~small & ~up

    for n in range(work + 1):
        out[n, small] = _j_series(n, x[small])

    if np.any(up):
        xu = x[up]
        out[0, up] = np.sin(xu) / xu
        out[1, up] = np.sin(xu) / xu**2 - np.cos(xu) / xu
        for n in range(1, work):
            out[n + 1, up] = (2 * n + 1) / xu * out[n, up] - out[n - 1, up]

    if np.any(down):
        # Miller's backward recurrence, normalized by sum_k (2k+1) j_k^2 = 1
        xd = x[down]
        top = work + _MILLER_PAD
        f_next = np.zeros_like(xd)
        f = np.full_like(xd, 1e-30)
        norm = (2 * top + 1) * f * f
        vals = np.zeros((work + 1, xd.size))
        for k in range(top, 0, -1):
            f_prev = (2 * k + 1) / xd * f - f_next
            f_next, f = f, f_prev
            norm += (2 * k - 1) * f * f
            if k - 1 <= work:
                vals[k - 1] = f
            big = np.abs(f) > 1e100
            if np.any(big):
                f[big] *= 1e-100
                f_next[big] *= 1e-100
                norm[big] *= 1e-200
                vals[:, big] *= 1e-100
        vals /= np.sqrt(norm)
        # sign taken from j_0, or from j_1 where j_0 is near a zero
        j0 = np.sin(xd) / xd
        j1 = np.sin(xd) / xd**2 - np.cos(xd) / xd
        use0 = np.abs(j0) > np.abs(j1)
        flip = np.where(use0, np.sign(j0) != np.sign(vals[0]), np.sign(j1) != np.sign(vals[1]))
        vals[:, flip] *= -1
        out[:, down] = vals
    return out[: order + 1]


def _y_all(order, x):
    out = np.zeros((order + 1, x.size))
    out[0] = -np.cos(x) / x
    if order >= 1:
        out[1] = -np.cos(x) / x**2 - np.sin(x) / x
    for n in range(1, order):
        out[n + 1] = (2 * n + 1) / x * out[n] - out[n - 1]
    return out


def _with_derivative(vals, x):
    # f_n' = f_{n-1} - (n+1)/x f_n ; f_0' = -f_1
    order = vals.shape[0] - 1
    full = vals
    d = np.zeros_like(vals)
    if order >= 1:
        d[0] = -full[1]
    for n in range(1, order + 1):
        d[n] = full[n - 1] - (n + 1) / x * full[n]
    return d


def _as_positive(x, allow_zero):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or (not allow_zero and np.any(x == 0)):
        raise ValueError("argument must be positive" + (" or zero" if allow_zero else ""))
    return x


def spherical_bessel_j(n, x, derivative=False):
    """Spherical Bessel function of the first kind ``j_n(x)`` (or its derivative).

    Accurate for ``0 <= x < 50`` and ``n <= 8``: upward recurrence where it is
    stable (``x >= n``), a power series for ``x < 1e-3`` and Miller's
    backward recurrence in between.
    """
    _check_order(n)
    x = _as_positive(x, allow_zero=True)
    flat = x.ravel()
    # one extra order is needed for the derivative at n = 0
    top = n + 1 if derivative else n
    vals = _j_all(top, flat)
    if derivative:
        out = np.empty_like(flat)
        nz = flat > 0
        out[nz] = _with_derivative(vals[:, nz], flat[nz])[n]
        # j_n'(0) = 1/3 for n = 1, else 0
        out[~nz] = 1.0 / 3.0 if n == 1 else 0.0
    else:
        out = vals[n]
    return out.reshape(x.shape)[()]


def spherical_bessel_y(n, x, derivative=False):
    _check_order(n)
    x = _as_positive(x, allow_zero=False)
    flat = x.ravel()
    vals = _y_all(n + 1, flat)
    out = _with_derivative(vals, flat)[n] if derivative else vals[n]
    return out.reshape(x.shape)[()]


def spherical_hankel2(n, x, derivative=False):
    """Spherical Hankel function of the second kind, ``h_n^(2) = j_n - i y_n``."""
    x = _as_positive(x, allow_zero=False)
    j = spherical_bessel_j(n, x, derivative)
    y = spherical_bessel_y(n, x, derivative)
    return j - 1j * y


def radial_all(order, kr, krs=None):
    """Rigid-sphere radial functions for all orders on an array of ``kr`` values.

    Returns a ``(order+1, len(kr))`` complex array. ``kr == 0`` yields the
    exact limit (``4*pi`` for ``n = 0``, zero otherwise).
    """
    kr = np.atleast_1d(np.asarray(kr, dtype=float))
    krs = kr if krs is None else np.broadcast_to(np.asarray(krs, dtype=float), kr.shape)
    if np.any(kr < 0) or np.any(krs < 0):
        raise ValueError("kr and krs must be non-negative")
    out = np.zeros((order + 1, kr.size), dtype=complex)
    zero = (kr == 0) | (krs == 0)
    out[0, zero] = 4 * np.pi
    x, xs = kr[~zero], krs[~zero]
    if x.size:
        j = _j_all(order + 1, x)[: order + 1]
        y = _y_all(order, x)
        js = _j_all(order + 1, xs)
        ys = _y_all(order + 1, xs)
        djs = _with_derivative(js, xs)[: order + 1]
        dh2s = djs - 1j * _with_derivative(ys, xs)[: order + 1]
        h2 = j - 1j * y
        n = np.arange(order + 1)[:, None]
        out[:, ~zero] = 4 * np.pi * (1j**n) * (j - djs / dh2s * h2)
    return out


def radial_rigid(order, kr, krs=None):
    """Rigid-sphere radial functions ``b_n(kr)`` for ``n = 0..order``.

    ``krs`` is the wavenumber times the sphere radius; it defaults to ``kr``
    (microphones flush on the surface).
    """
    if kr <= 0 or (krs is not None and krs <= 0):
        raise ValueError("kr and krs must be positive")
    if order > MAX_ORDER:
        raise ValueError(f"orders above {MAX_ORDER} are not supported")
    values = radial_all(order, [kr], None if krs is None else [krs])[:, 0]
    return RadialFunctions(order, float(kr), values)

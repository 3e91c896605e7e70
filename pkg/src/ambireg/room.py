"""Image-method shoebox simulation for a rigid-sphere array.

Each image source reaches the array as a far-field plane wave with delay
``d/c`` and ``1/d`` attenuation. Rendering is done on the FFT grid of the
full signal, so delays are exact.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .encoder import SPEED_OF_SOUND
from .sh import Direction, MAX_ORDER, num_coeffs, order_of_acn, radial_all, sh_matrix
from .tf import STFTConfig, stft

SABINE = 0.161
DRR_THRESHOLD = 0.7


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple
    t60: float
    max_image_order: int = 12

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError("room dims must be three positive lengths")
        if not self.t60 > 0:
            raise ValueError("t60 must be positive")
        if self.max_image_order < 0:
            raise ValueError("max_image_order must be non-negative")
        object.__setattr__(self, "dims", dims)

    @property
    def volume(self):
        return float(np.prod(self.dims))

    @property
    def surface(self):
        x, y, z = self.dims
        return 2 * (x * y + x * z + y * z)

    def contains(self, pos, margin=0.0):
        pos = np.asarray(pos, dtype=float)
        return bool(np.all(pos > margin) and np.all(pos < np.asarray(self.dims) - margin))


@dataclass(frozen=True)
class SourceSpec:
    position: tuple
    signal: np.ndarray = field(repr=False)
    sample_rate: int = 16000

    def __post_init__(self):
        sig = np.asarray(self.signal, dtype=float)
        if sig.ndim != 1 or not np.all(np.isfinite(sig)):
            raise ValueError("source signal must be a finite mono sequence")
        object.__setattr__(self, "signal", sig)
        object.__setattr__(self, "position", tuple(float(p) for p in self.position))


@dataclass(frozen=True)
class ImageSource:
    position: np.ndarray
    reflection_order: int
    amplitude: float
    direction_from_array: Direction
    distance: float


@dataclass
class SimOutput:
    """Noiseless or noisy rendering of one scene.

    ``omni`` and ``direct_omni`` hold the order-0 plane-wave density of the
    full and direct-only sound fields; they never carry sensor noise and are
    used for DRR labels.
    """

    mic_signals: np.ndarray
    direct_mic_signals: np.ndarray
    true_doa: Direction
    snr_db: float = np.inf
    omni: np.ndarray = None
    direct_omni: np.ndarray = None
    sample_rate: int = 16000
    meta: dict = field(default_factory=dict)

    @property
    def num_mics(self):
        return self.mic_signals.shape[1]


def t60_to_reflection(room):
    """Uniform wall reflection coefficient from Sabine's formula."""
    alpha = SABINE * room.volume / (room.surface * room.t60)
    if alpha >= 1:
        raise ValueError(
            f"T60 of {room.t60} s is too short for a {room.volume:.1f} m^3 room "
            f"(implied absorption {alpha:.2f} >= 1)"
        )
    return float(np.sqrt(1 - alpha))


def _axis_images(length, src, order):
    # image index i: position, number of wall hits
    idx = np.arange(-order, order + 1)
    pos = np.where(idx % 2 == 0, idx * length + src, (idx + 1) * length - src)
    return idx, pos


def image_sources(room, src, array_center, reflection=None):
    """All image sources up to ``room.max_image_order``, sorted by distance."""
    center = np.asarray(array_center, dtype=float)
    spos = np.asarray(src.position if isinstance(src, SourceSpec) else src, dtype=float)
    if not room.contains(spos) or not room.contains(center):
        raise ValueError("source and array must lie inside the room")
    rho = t60_to_reflection(room) if reflection is None else float(reflection)
    K = room.max_image_order if rho > 0 else 0
    axes = [_axis_images(room.dims[a], spos[a], K) for a in range(3)]
    ix, iy, iz = np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij")
    px, py, pz = np.meshgrid(axes[0][1], axes[1][1], axes[2][1], indexing="ij")
    order = np.abs(ix) + np.abs(iy) + np.abs(iz)
    keep = order <= K
    pos = np.stack([px[keep], py[keep], pz[keep]], axis=1)
    order = order[keep]
    rel = pos - center
    dist = np.linalg.norm(rel, axis=1)
    sort = np.lexsort((order, dist))
    images = []
    for i in sort:
        amp = rho ** order[i] if order[i] > 0 else 1.0
        images.append(
            ImageSource(pos[i], int(order[i]), float(amp), Direction.from_vector(rel[i]), float(dist[i]))
        )
    return images


def _fft_len(n):
    from scipy.fft import next_fast_len

    return next_fast_len(int(n), real=True)


def render_sh_field(images, signal, order, sample_rate=16000, c=SPEED_OF_SOUND, n_out=None):
    """Spectra of the plane-wave density ``a_nm(f)`` of the image field.

    Returns ``(A, nfft)`` with ``A`` of shape ``((order+1)^2, nfft//2+1)``,
    already multiplied by the source spectrum.
    """
    signal = np.asarray(signal, dtype=float)
    max_delay = max(im.distance for im in images) / c * sample_rate
    if n_out is None:
        n_out = len(signal) + int(np.ceil(max_delay)) + 1
    nfft = _fft_len(n_out)
    freqs = np.fft.rfftfreq(nfft, 1 / sample_rate)
    S = np.fft.rfft(signal, nfft)
    dirs = np.array([[im.direction_from_array.theta, im.direction_from_array.phi] for im in images])
    gain = np.array([im.amplitude / im.distance for im in images])
    delay = np.array([im.distance / c for im in images])
    Yc = sh_matrix(dirs, order).conj().T * gain  # (coeffs, M)
    A = np.zeros((num_coeffs(order), freqs.size), dtype=complex)
    step = int(np.clip(2**21 // max(len(images), 1), 1, freqs.size))
    # exp(-i w d) on a block of the uniform grid = block phase * fixed ramp
    ramp = np.exp(-2j * np.pi * delay[:, None] * (freqs[1] * np.arange(step))[None, :])
    for f0 in range(0, freqs.size, step):
        n = min(step, freqs.size - f0)
        E = np.exp(-2j * np.pi * delay * freqs[f0])[:, None] * ramp[:, :n]
        A[:, f0 : f0 + n] = Yc @ E
    return A * S, nfft


def render_mic_signals(images, src_signal, geom, order=6, sample_rate=16000, c=SPEED_OF_SOUND):
    """Noiseless microphone signals of the rigid-sphere array.

    ``order`` is the simulation SH order; it should exceed the analysis
    order so the analysis does not simply invert the forward model.
    """
    if order > MAX_ORDER:
        raise ValueError(f"simulation order {order} exceeds supported maximum {MAX_ORDER}")
    fmax = sample_rate / 2
    kr_max = 2 * np.pi * fmax / c * geom.radius
    if kr_max > 50:
        raise ValueError("array too large for the stable special-function range")
    sig = np.asarray(src_signal, dtype=float)
    direct = [im for im in images if im.reflection_order == 0]
    if len(direct) != 1:
        raise ValueError("exactly one order-0 image is required")
    max_delay = max(im.distance for im in images) / c * sample_rate
    n_out = len(sig) + int(np.ceil(max_delay)) + 1

    Y = sh_matrix(geom.mic_dirs, order)
    p_out, omni_out = [], []
    for subset in (images, direct):
        A, nfft = render_sh_field(subset, sig, order, sample_rate, c, n_out)
        freqs = np.fft.rfftfreq(nfft, 1 / sample_rate)
        b = radial_all(order, 2 * np.pi * freqs / c * geom.radius)
        P = Y @ (b[order_of_acn(order)] * A)
        p_out.append(np.fft.irfft(P, nfft, axis=1)[:, :n_out].T)
        omni_out.append(np.fft.irfft(A[0], nfft)[:n_out])
    return SimOutput(
        mic_signals=p_out[0],
        direct_mic_signals=p_out[1],
        true_doa=direct[0].direction_from_array,
        omni=omni_out[0],
        direct_omni=omni_out[1],
        sample_rate=sample_rate,
    )


def add_noise_snr(sim, snr_db, seed):
    """Add white Gaussian sensor noise at ``snr_db``.

    The noise variance is the same on every channel and set from the mean
    per-channel signal power. ``snr_db = inf`` returns the input unchanged.
    """
    if np.isposinf(snr_db):
        return replace(sim, snr_db=np.inf)
    x = sim.mic_signals
    power = np.mean(x**2)
    if power == 0:
        raise ValueError("cannot set an SNR on a silent signal")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(x.shape)
    noise *= np.sqrt(power / 10 ** (snr_db / 10) / np.mean(noise**2))
    meta = dict(sim.meta, noise_seed=int(seed))
    return replace(sim, mic_signals=x + noise, snr_db=float(snr_db), meta=meta)


def measured_snr_db(clean, noisy):
    noise = noisy - clean
    return 10 * np.log10(np.mean(clean**2) / np.mean(noise**2))


def drr_labels(sim, stft_cfg=STFTConfig(), threshold=DRR_THRESHOLD, return_drr=False):
    """Binary direct-path labels per time-frequency bin.

    DRR is ``|direct|^2 / |total - direct|^2`` of the order-0 plane-wave
    density; label 1 iff DRR exceeds ``threshold`` (a linear ratio). Bins
    without reverberant energy count as DRR = inf. Output shape is
    ``(frames, bins)`` on the full STFT grid.
    """
    if sim.omni is None or sim.direct_omni is None:
        raise ValueError("simulation output carries no omnidirectional reference")
    D = stft(sim.direct_omni, stft_cfg).data[..., 0]
    T = stft(sim.omni, stft_cfg).data[..., 0]
    num = np.abs(D) ** 2
    den = np.abs(T - D) ** 2
    # relative floor: rounding residue is not reverberation
    floor = 1e-20 * max(np.max(np.abs(T) ** 2), 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        drr = np.where(den > floor, num / np.where(den > floor, den, 1.0), np.inf)
    drr = np.where((den <= floor) & (num <= floor), 0.0, drr)
    labels = (drr > threshold).astype(np.int8)
    return (labels, drr) if return_drr else labels


# --- scenes and file I/O ---------------------------------------------------


def speech_like(duration, sample_rate=16000, seed=0, tilt_hz=4000.0):
    """Speech-shaped test signal: syllabic-rate modulated, spectrally tilted noise.

    Voiced segments carry a harmonic series with a wandering pitch; gaps
    between syllables are near-silent.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    # syllable envelope around 4 Hz with random durations and pauses
    env = np.zeros(n)
    pos = 0
    while pos < n:
        syl = int(rng.uniform(0.12, 0.3) * sample_rate)
        gap = int(rng.uniform(0.02, 0.15) * sample_rate)
        seg = np.sin(np.linspace(0, np.pi, syl)) ** 2
        env[pos : pos + syl] = seg[: max(0, min(syl, n - pos))]
        pos += syl + gap
    f0 = 110 + 60 * rng.random() + 20 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * t)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    voiced = sum(np.cos(h * phase) / (1 + h / (tilt_hz / 100.0)) for h in range(1, 30))
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1 / sample_rate)
    spec /= np.sqrt(1 + (f / tilt_hz) ** 2)
    noise = np.fft.irfft(spec, n)
    x = env * (voiced / np.std(voiced) + 0.5 * noise / np.std(noise))
    return x / np.max(np.abs(x)) * 0.5


def read_wav(path):
    """Read a WAV file as float64 in ``[-1, 1]``; returns ``(rate, samples)``."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype.kind != "f":
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return int(rate), np.asarray(data, dtype=float)


def write_wav(path, signals, sample_rate=16000, fmt="float32"):
    x = np.asarray(signals)
    if fmt == "float32":
        wavfile.write(path, sample_rate, x.astype(np.float32))
    elif fmt == "pcm16":
        if np.max(np.abs(x)) > 1:
            raise ValueError("pcm16 output would clip; scale the signal below 1.0")
        # same 2^15 scale as read_wav; +1.0 saturates at the largest code
        q = np.clip(np.round(x * 32768), -32768, 32767)
        wavfile.write(path, sample_rate, q.astype(np.int16))
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")


def write_metadata(path, sim, room, source_pos, array_center, seed, extra=None):
    meta = {
        "true_doa_deg": {"theta": sim.true_doa.degrees[0], "phi": sim.true_doa.degrees[1]},
        "room": asdict(room),
        "source_position": list(map(float, source_pos)),
        "array_center": list(map(float, array_center)),
        "snr_db": None if np.isinf(sim.snr_db) else float(sim.snr_db),
        "seed": int(seed),
        "sample_rate": int(sim.sample_rate),
        "num_mics": int(sim.num_mics),
    }
    meta.update(extra or {})
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return meta

"""STFT analysis and local spatial autocorrelation per time-frequency bin."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .sh import num_coeffs


@dataclass(frozen=True)
class STFTConfig:
    window_len: int = 512
    hop: int = 256
    sample_rate: int = 16000
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len:
            raise ValueError("hop must lie in (0, window_len]")
        w = self.window_array()
        # constant overlap-add at the chosen hop
        ola = np.zeros(self.hop)
        for start in range(0, self.window_len, self.hop):
            seg = w[start : start + self.hop]
            ola[: len(seg)] += seg
        if np.ptp(ola) > 1e-10 * np.max(ola):
            raise ValueError(f"{self.window} window is not COLA at hop {self.hop}")

    def window_array(self):
        n = np.arange(self.window_len)
        if self.window == "hann":
            return 0.5 - 0.5 * np.cos(2 * np.pi * n / self.window_len)
        if self.window == "rect":
            return np.ones(self.window_len)
        raise ValueError(f"unknown window {self.window!r}")

    @property
    def num_bins(self):
        return self.window_len // 2 + 1

    def bin_hz(self, k):
        return np.asarray(k) * self.sample_rate / self.window_len


@dataclass(frozen=True)
class TFTensor:
    """Complex STFT data, ``frames x bins x channels``.

    ``bin_offset`` is the absolute FFT bin index of column 0, so
    ``bin_hz`` stays correct after :func:`band_select`.
    """

    data: np.ndarray
    cfg: STFTConfig
    bin_offset: int = 0
    channels: str = "mic"

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def num_bins(self):
        return self.data.shape[1]

    @property
    def num_channels(self):
        return self.data.shape[2]

    @property
    def bins(self):
        return self.bin_offset + np.arange(self.num_bins)

    @property
    def bin_hz(self):
        return self.cfg.bin_hz(self.bins)

    def with_data(self, data, channels=None):
        return TFTensor(data, self.cfg, self.bin_offset, channels or self.channels)


def stft(signal, cfg=STFTConfig()):
    """STFT of a ``(samples,)`` or ``(samples, channels)`` signal.

    Frame ``i`` covers samples ``[i*hop, i*hop + window_len)``; only full
    frames are kept.
    """
    x = np.asarray(signal)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < cfg.window_len:
        raise ValueError(f"signal has {x.shape[0]} samples, need at least {cfg.window_len}")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len, axis=0)[:: cfg.hop]
    # frames: (T, channels, window_len)
    spec = np.fft.rfft(frames * cfg.window_array(), axis=-1)
    return TFTensor(np.ascontiguousarray(spec.transpose(0, 2, 1)), cfg)


def istft(t, length=None):
    """Overlap-add inverse of :func:`stft`; exact away from the signal edges."""
    if t.bin_offset != 0 or t.num_bins != t.cfg.num_bins:
        raise ValueError("istft needs the full band")
    cfg = t.cfg
    frames = np.fft.irfft(t.data, n=cfg.window_len, axis=1)  # (T, L, C)
    n = (t.num_frames - 1) * cfg.hop + cfg.window_len
    out = np.zeros((n, t.num_channels), dtype=frames.dtype)
    wsum = np.zeros(n)
    w = cfg.window_array()
    for i in range(t.num_frames):
        out[i * cfg.hop : i * cfg.hop + cfg.window_len] += frames[i]
        wsum[i * cfg.hop : i * cfg.hop + cfg.window_len] += w
    out /= np.where(wsum > 1e-12, wsum, 1.0)[:, None]
    if length is not None:
        out = out[:length]
    return out


def band_select(t, lo=400.0, hi=5000.0):
    """Keep bins with ``lo <= bin_hz <= hi``."""
    cfg = t.cfg
    if not lo < hi:
        raise ValueError(f"empty band: lo={lo} >= hi={hi}")
    if hi > cfg.sample_rate / 2 + 1e-9 or lo < 0:
        raise ValueError("band must lie within [0, Nyquist]")
    k_lo = int(np.ceil(lo * cfg.window_len / cfg.sample_rate - 1e-9))
    k_hi = int(np.floor(hi * cfg.window_len / cfg.sample_rate + 1e-9))
    k_lo = max(k_lo, t.bin_offset)
    k_hi = min(k_hi, t.bin_offset + t.num_bins - 1)
    if k_hi < k_lo:
        raise ValueError(f"no bins in [{lo}, {hi}] Hz")
    cols = slice(k_lo - t.bin_offset, k_hi - t.bin_offset + 1)
    return TFTensor(t.data[:, cols], cfg, k_lo, t.channels)


@dataclass(frozen=True)
class BinNeighborhood:
    """Smoothing extent around a bin: ``time_extent`` frames by ``freq_extent`` bins."""

    time_extent: int = 2
    freq_extent: int = 9

    def offsets(self, extent):
        return np.arange(-((extent - 1) // 2), extent // 2 + 1)

    @property
    def time_offsets(self):
        return self.offsets(self.time_extent)

    @property
    def freq_offsets(self):
        return self.offsets(self.freq_extent)

    @property
    def size(self):
        return self.time_extent * self.freq_extent

    def check_rank(self, order):
        if self.size < num_coeffs(order):
            raise ValueError(
                f"neighborhood of {self.size} snapshots cannot give a full-rank "
                f"estimate for order {order}"
            )


def local_autocorr(a, at, hood=BinNeighborhood()):
    """Average of ``a a^H`` over the neighborhood of bin ``at = (frame, bin)``.

    ``bin`` is a column index into ``a``. Returns ``None`` when the
    neighborhood does not fit inside the tensor.
    """
    tau, k = at
    ts = tau + hood.time_offsets
    ks = k + hood.freq_offsets
    if ts[0] < 0 or ks[0] < 0 or ts[-1] >= a.num_frames or ks[-1] >= a.num_bins:
        return None
    snaps = a.data[ts[0] : ts[-1] + 1, ks[0] : ks[-1] + 1].reshape(-1, a.num_channels)
    return snaps.T @ snaps.conj() / hood.size


def valid_centers(a, hood=BinNeighborhood()):
    """Frame and bin index ranges whose full neighborhood fits inside ``a``."""
    t0, t1 = -hood.time_offsets[0], a.num_frames - hood.time_offsets[-1]
    k0, k1 = -hood.freq_offsets[0], a.num_bins - hood.freq_offsets[-1]
    return np.arange(t0, max(t0, t1)), np.arange(k0, max(k0, k1))


def _box_sum(x, axis, extent):
    # running sum of `extent` consecutive entries along `axis`
    c = np.cumsum(x, axis=axis)
    zero = np.zeros_like(np.take(c, [0], axis=axis))
    c = np.concatenate([zero, c], axis=axis)
    n = c.shape[axis]
    return np.take(c, np.arange(extent, n), axis=axis) - np.take(c, np.arange(0, n - extent), axis=axis)


@dataclass
class BinStats:
    """Per-bin spatial statistics over all valid neighborhood centers.

    ``svs`` are descending singular values and ``principal`` the
    corresponding top eigenvector of each local autocorrelation matrix.
    """

    frames: np.ndarray
    bins: np.ndarray
    bin_hz: np.ndarray
    svs: np.ndarray
    principal: np.ndarray
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)


def bin_statistics(a, hood=BinNeighborhood(), chunk=64):
    """Singular values and principal eigenvectors of every local autocorrelation.

    Equivalent to calling :func:`local_autocorr` and an eigendecomposition
    on every valid bin, with the smoothing done by running sums.
    Rows are ordered by frame, then bin.
    """
    taus, ks = valid_centers(a, hood)
    C = a.num_channels
    if taus.size == 0 or ks.size == 0:
        empty = np.zeros((0, C))
        return BinStats(np.zeros(0, int), np.zeros(0, int), np.zeros(0), empty, empty.astype(complex))
    t_lo = hood.time_offsets[0]
    k_lo = hood.freq_offsets[0]
    svs, vecs = [], []
    for start in range(0, taus.size, chunk):
        tc = taus[start : start + chunk]
        seg = a.data[tc[0] + t_lo : tc[-1] + t_lo + hood.time_extent]
        outer = seg[..., :, None] * seg[..., None, :].conj()
        outer = _box_sum(outer, 0, hood.time_extent)
        outer = _box_sum(outer, 1, hood.freq_extent)
        R = outer / hood.size  # (len(tc), len(ks), C, C)
        w, v = np.linalg.eigh(R)
        svs.append(np.abs(w[..., ::-1]).reshape(-1, C))
        vecs.append(v[..., :, -1].reshape(-1, C))
    frames = np.repeat(taus, ks.size)
    bins = np.tile(ks, taus.size)
    return BinStats(
        frames=frames,
        bins=bins + a.bin_offset,
        bin_hz=a.cfg.bin_hz(bins + a.bin_offset),
        svs=np.concatenate(svs),
        principal=np.concatenate(vecs),
    )


def singular_values(R):
    """Singular values of a square matrix, descending."""
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("R must be a square matrix")
    return np.linalg.svd(R, compute_uv=False)


def export_csv(t, path):
    """Write a spectrogram as ``frame, bin, channel, re, im`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "bin", "channel", "re", "im"])
        for tau in range(t.num_frames):
            for j, k in enumerate(t.bins):
                for ch in range(t.num_channels):
                    z = t.data[tau, j, ch]
                    w.writerow([tau, int(k), ch, repr(float(z.real)), repr(float(z.imag))])

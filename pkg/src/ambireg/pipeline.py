"""Scene simulation, feature extraction and evaluation glue.

Everything here composes the module-level operations; the CLI adds only
file handling on top.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import dpd, music
from .encoder import Encoder, RegularizationProfile, lambda_for_snr, load_geometry
from .room import (
    RoomSpec,
    add_noise_snr,
    drr_labels,
    image_sources,
    render_mic_signals,
    speech_like,
)
from .tf import BinNeighborhood, STFTConfig, band_select, bin_statistics, stft

DEFAULT_BAND = (400.0, 5000.0)
DEFAULT_BANDS = ((400.0, 1000.0), (1000.0, 2000.0), (2000.0, 3000.0), (3000.0, 4000.0), (4000.0, 5000.0))


@dataclass(frozen=True)
class SceneSpec:
    """One simulated recording: room, placements, signal and noise seeds."""

    room: RoomSpec
    source: tuple
    array_center: tuple
    duration: float
    signal_seed: int
    snr_db: float = np.inf
    noise_seed: int = 0
    lam: float = None
    name: str = "scene"

    def to_dict(self):
        d = asdict(self)
        d["snr_db"] = None if np.isinf(self.snr_db) else float(self.snr_db)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["room"] = RoomSpec(**d["room"])
        d["snr_db"] = np.inf if d.get("snr_db") is None else float(d["snr_db"])
        d["source"] = tuple(d["source"])
        d["array_center"] = tuple(d["array_center"])
        return cls(**d)


def sample_scenes(
    count,
    seed,
    volume=(24.0, 480.0),
    t60=(0.25, 1.5),
    duration=1.0,
    snr_db=10.0,
    distance=(0.7, 1.5),
    max_image_order=12,
    prefix="scene",
):
    """Draw random shoebox scenes.

    ``snr_db`` may be a scalar or a list cycled over scenes; an entry that is
    a ``(snr_db, lam)`` pair also fixes the scene's encoding regularization.
    """
    rng = np.random.default_rng(seed)
    snrs = snr_db if isinstance(snr_db, (list, tuple)) else [snr_db]
    scenes = []
    for i in range(count):
        for _ in range(1000):
            vol = np.exp(rng.uniform(np.log(volume[0]), np.log(volume[1])))
            height = rng.uniform(2.5, 3.5)
            aspect = rng.uniform(1.0, 1.8)
            width = np.sqrt(vol / height / aspect)
            dims = (width * aspect, width, height)
            room = RoomSpec(dims, float(rng.uniform(*t60)), max_image_order)
            alpha = 0.161 * room.volume / (room.surface * room.t60)
            if alpha >= 0.95 or min(dims[:2]) < 2.2:
                continue
            center = np.array(
                [rng.uniform(1.0, dims[0] - 1.0), rng.uniform(1.0, dims[1] - 1.0), rng.uniform(1.2, 1.6)]
            )
            d = rng.uniform(*distance)
            az = rng.uniform(0, 2 * np.pi)
            el = rng.uniform(np.deg2rad(60), np.deg2rad(110))
            src = center + d * np.array([np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)])
            if room.contains(src, margin=0.4):
                break
        else:
            raise RuntimeError("could not place a source; widen the room ranges")
        entry = snrs[i % len(snrs)]
        snr, lam = (entry if isinstance(entry, (list, tuple)) else (entry, None))
        scenes.append(
            SceneSpec(
                room=room,
                source=tuple(map(float, src)),
                array_center=tuple(map(float, center)),
                duration=float(duration),
                signal_seed=int(rng.integers(2**31)),
                snr_db=float(snr),
                noise_seed=int(rng.integers(2**31)),
                lam=None if lam is None else float(lam),
                name=f"{prefix}_{i:03d}",
            )
        )
    return scenes


def simulate_scene(scene, geom=None, sim_order=6, sample_rate=16000, signal=None):
    """Render a scene and add its sensor noise."""
    geom = geom or load_geometry()
    if signal is None:
        signal = speech_like(scene.duration, sample_rate, seed=scene.signal_seed)
    images = image_sources(scene.room, scene.source, scene.array_center)
    sim = render_mic_signals(images, signal, geom, sim_order, sample_rate)
    sim = add_noise_snr(sim, scene.snr_db, scene.noise_seed)
    sim.meta.update(scene=scene.name, num_images=len(images))
    return sim


@dataclass(frozen=True)
class AnalysisConfig:
    order: int = 3
    stft: STFTConfig = STFTConfig()
    band: tuple = DEFAULT_BAND
    hood: BinNeighborhood = BinNeighborhood()

    def __post_init__(self):
        self.hood.check_rank(self.order)


@dataclass
class SceneFeatures:
    """Per-bin statistics of one encoded scene at one regularization level."""

    lam: float
    stats: object
    labels: np.ndarray = None
    dist_pw: np.ndarray = None
    truth: object = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def svs(self):
        return self.stats.svs

    def __len__(self):
        return len(self.stats)


class SceneAnalyzer:
    """STFT once, then encode and extract bin statistics per regularization level."""

    def __init__(self, mic_signals, encoder, cfg=AnalysisConfig()):
        self.encoder = encoder
        self.cfg = cfg
        self.mic_tf = band_select(stft(mic_signals, cfg.stft), *cfg.band)

    def ambisonics(self, lam):
        """Encoded STFT tensor with ACN channels."""
        reg = RegularizationProfile("tikhonov", float(lam))
        M = self.encoder.matrices(self.mic_tf.bin_hz, reg)  # (F, C, Q)
        a = np.einsum("fcq,tfq->tfc", M, self.mic_tf.data, optimize=True)
        return self.mic_tf.with_data(a, channels="acn")

    def features(self, lam):
        reg = RegularizationProfile("tikhonov", float(lam))
        stats = bin_statistics(self.ambisonics(lam), self.cfg.hood)
        dist = self.encoder.plane_wave_distortions(stats.bin_hz, reg) if len(stats) else np.zeros(0)
        return SceneFeatures(lam=float(lam), stats=stats, dist_pw=dist)


def scene_features(sim, encoder, lams, cfg=AnalysisConfig(), with_labels=True, name=""):
    """Features of a simulated scene at each regularization level in ``lams``."""
    an = SceneAnalyzer(sim.mic_signals, encoder, cfg)
    labels_full = drr_labels(sim, cfg.stft) if with_labels else None
    out = []
    for lam in lams:
        f = an.features(lam)
        if labels_full is not None:
            f.labels = labels_full[f.stats.frames, f.stats.bins]
        f.truth = sim.true_doa
        f.name = name
        out.append(f)
    return out


def score_bins(params, feats, informed=False):
    """Classifier scores, weighted by ``1 - DIST`` in informed mode."""
    f1 = dpd.predict_direct(params, feats.svs)
    weight = dpd.informed_weight(feats.dist_pw) if informed else None
    st = feats.stats
    return dpd.BinScores(st.frames, st.bins, st.bin_hz, f1, weight)


@dataclass
class Selection:
    """Selected bins of one scene with their MUSIC estimates and errors."""

    indices: np.ndarray
    grid_index: np.ndarray
    errors: np.ndarray


def localize(feats, indices, grid):
    """MUSIC estimates and per-bin angular errors for the given bins."""
    if len(indices) == 0:
        return Selection(indices, np.zeros(0, int), np.zeros(0))
    gidx, _ = music.music_doa_batch(feats.stats.principal[indices], grid)
    th, ph = grid.dirs[gidx].T
    err = music.angle_errors_deg(th, ph, feats.truth.theta, feats.truth.phi)
    return Selection(indices, gidx, err)


class ErrorTable:
    """Per-bin DOA errors cached over a scene so nested selections reuse MUSIC."""

    def __init__(self, feats, grid):
        self.feats = feats
        self.grid = grid
        self._err = {}

    def errors(self, indices):
        missing = np.array([i for i in indices if i not in self._err], dtype=int)
        if missing.size:
            sel = localize(self.feats, missing, self.grid)
            self._err.update(zip(missing.tolist(), sel.errors.tolist()))
        return np.array([self._err[i] for i in indices])


def pooled_error(tables, scores, fraction, bands=None):
    """Mean angular error over bins selected per scene, pooled across scenes."""
    errs = []
    for table, sc in zip(tables, scores):
        idx = dpd.select_top_bins(sc, fraction, bands)
        errs.append(table.errors(idx))
    errs = np.concatenate(errs) if errs else np.zeros(0)
    return float(np.mean(errs)) if errs.size else float("nan"), int(errs.size)


def train_features(feature_sets):
    """Stack singular values, labels and scene groups for training."""
    svs = np.concatenate([f.svs for f in feature_sets])
    labels = np.concatenate([f.labels for f in feature_sets])
    groups = np.concatenate([np.full(len(f), i) for i, f in enumerate(feature_sets)])
    return svs, labels, groups


def informed_lambda(scene):
    return scene.lam if scene.lam is not None else lambda_for_snr(scene.snr_db)


__all__ = [
    "AnalysisConfig",
    "Encoder",
    "ErrorTable",
    "SceneAnalyzer",
    "SceneFeatures",
    "SceneSpec",
    "localize",
    "pooled_error",
    "sample_scenes",
    "scene_features",
    "score_bins",
    "simulate_scene",
    "train_features",
]

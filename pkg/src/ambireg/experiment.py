"""Datasets, training and the regularization sweep evaluation.

A :class:`Recording` is what a microphone array delivers plus the
simulation-side ground truth (DOA and per-bin labels). Recordings round-trip
through a directory of WAV, JSON and label CSV files, so the command line
and the in-memory path share the same code.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, dpd, music
from .config import ExperimentConfig
from .encoder import Encoder, RegularizationProfile, load_geometry
from .pipeline import (
    AnalysisConfig,
    ErrorTable,
    SceneAnalyzer,
    pooled_error,
    sample_scenes,
    score_bins,
    simulate_scene,
    train_features,
)
from .room import drr_labels, read_wav, write_wav
from .sh import Direction
from .tf import STFTConfig

MODES = ("uninformed", "informed")


@dataclass
class Recording:
    """Array signals with ground truth.

    ``labels`` holds direct-path labels on the band-limited STFT grid,
    ``(frames, bins)`` with column 0 at absolute bin ``label_offset``.
    """

    name: str
    mic_signals: np.ndarray
    sample_rate: int
    true_doa: Direction
    labels: np.ndarray = None
    label_offset: int = 0
    snr_db: float = np.inf
    lam: float = None
    meta: dict = field(default_factory=dict)


def analysis_config(cfg):
    stft = STFTConfig(cfg.window_len, cfg.hop, cfg.sample_rate)
    return AnalysisConfig(order=cfg.order, stft=stft, band=tuple(cfg.band))


def _band_bins(acfg):
    s = acfg.stft
    lo = int(np.ceil(acfg.band[0] * s.window_len / s.sample_rate - 1e-9))
    hi = int(np.floor(acfg.band[1] * s.window_len / s.sample_rate + 1e-9))
    return lo, hi


def record_scene(scene, geom, cfg):
    """Simulate one scene into a :class:`Recording`."""
    acfg = analysis_config(cfg)
    sim = simulate_scene(scene, geom, cfg.sim_order, cfg.sample_rate)
    lo, hi = _band_bins(acfg)
    labels = drr_labels(sim, acfg.stft)[:, lo : hi + 1]
    meta = {
        "scene": scene.to_dict(),
        "num_images": sim.meta.get("num_images"),
        "noise_seed": sim.meta.get("noise_seed"),
    }
    return Recording(
        name=scene.name,
        mic_signals=sim.mic_signals,
        sample_rate=cfg.sample_rate,
        true_doa=sim.true_doa,
        labels=labels,
        label_offset=lo,
        snr_db=scene.snr_db,
        lam=scene.lam,
        meta=meta,
    )


def train_scenes(cfg, mode):
    t = cfg.train
    snrs = list(t.snr_db) if mode == "uninformed" else [tuple(p) for p in t.informed]
    return sample_scenes(
        t.scenes, t.seed + cfg.seed, volume=t.volume, t60=t.t60, duration=t.duration,
        snr_db=snrs, distance=t.distance, prefix=f"train_{mode}",
    )


def eval_scenes(cfg, seed):
    t = cfg.test
    return sample_scenes(
        t.scenes, seed + cfg.seed, volume=t.volume, t60=t.t60, duration=t.duration,
        snr_db=t.snr_db, distance=t.distance, prefix=f"test{seed}",
    )


# --- on-disk layout ----------------------------------------------------------


def write_recording(rec, directory, fmt="float32"):
    """Write ``<name>.wav``, ``<name>.json`` and ``<name>_labels.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_wav(directory / f"{rec.name}.wav", rec.mic_signals, rec.sample_rate, fmt)
    th, ph = rec.true_doa.degrees
    meta = dict(
        rec.meta,
        name=rec.name,
        true_doa_deg={"theta": th, "phi": ph},
        snr_db=None if np.isinf(rec.snr_db) else float(rec.snr_db),
        lam=rec.lam,
        sample_rate=int(rec.sample_rate),
        num_mics=int(rec.mic_signals.shape[1]),
        label_offset=int(rec.label_offset),
    )
    (directory / f"{rec.name}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if rec.labels is not None:
        with open(directory / f"{rec.name}_labels.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "bin", "label"])
            for tau, row in enumerate(rec.labels):
                for j, lab in enumerate(row):
                    w.writerow([tau, j + rec.label_offset, int(lab)])


def read_recording(wav_path):
    """Inverse of :func:`write_recording`."""
    wav_path = Path(wav_path)
    meta = json.loads(wav_path.with_suffix(".json").read_text(encoding="utf-8"))
    rate, x = read_wav(wav_path)
    labels = None
    lab_path = wav_path.with_name(wav_path.stem + "_labels.csv")
    if lab_path.exists():
        rows = np.loadtxt(lab_path, delimiter=",", skiprows=1, dtype=int, ndmin=2)
        frames, bins = rows[:, 0], rows[:, 1] - meta["label_offset"]
        labels = np.zeros((frames.max() + 1, bins.max() + 1), dtype=np.int8)
        labels[frames, bins] = rows[:, 2]
    doa = Direction.from_degrees(meta["true_doa_deg"]["theta"], meta["true_doa_deg"]["phi"])
    snr = np.inf if meta.get("snr_db") is None else float(meta["snr_db"])
    return Recording(
        name=meta["name"],
        mic_signals=x,
        sample_rate=rate,
        true_doa=doa,
        labels=labels,
        label_offset=meta["label_offset"],
        snr_db=snr,
        lam=meta.get("lam"),
        meta=meta,
    )


def read_dataset(directory):
    paths = sorted(Path(directory).glob("*.wav"))
    if not paths:
        raise FileNotFoundError(f"no recordings in {directory}")
    return [read_recording(p) for p in paths]


def dataset_dirs(root):
    root = Path(root)
    return {
        "uninformed": root / "data" / "train_uninformed",
        "informed": root / "data" / "train_informed",
        "test": root / "data" / "test",
    }


def generate(cfg, root, geom=None):
    """Simulate and write every training and test scene under ``root``."""
    geom = geom or load_geometry(cfg.geometry)
    dirs = dataset_dirs(root)
    written = []
    for mode in MODES:
        for scene in train_scenes(cfg, mode):
            rec = record_scene(scene, geom, cfg)
            write_recording(rec, dirs[mode])
            written.append(dirs[mode] / f"{rec.name}.wav")
    for seed in cfg.test.seeds:
        for scene in eval_scenes(cfg, seed):
            rec = record_scene(scene, geom, cfg)
            write_recording(rec, dirs["test"] / f"seed_{seed}")
            written.append(dirs["test"] / f"seed_{seed}" / f"{rec.name}.wav")
    return written


# --- features, training, evaluation -----------------------------------------


def recording_features(rec, encoder, lams, acfg):
    """Scene features at each ``lam`` with labels aligned to the valid bins."""
    if rec.sample_rate != acfg.stft.sample_rate:
        raise ValueError(f"{rec.name}: sample rate {rec.sample_rate} Hz, expected {acfg.stft.sample_rate} Hz")
    an = SceneAnalyzer(rec.mic_signals, encoder, acfg)
    out = []
    for lam in lams:
        f = an.features(lam)
        if rec.labels is not None:
            f.labels = rec.labels[f.stats.frames, f.stats.bins - rec.label_offset]
        f.truth = rec.true_doa
        f.name = rec.name
        f.meta["lam"] = float(lam)
        out.append(f)
    return out


def training_lambda(rec, mode, cfg):
    if mode == "uninformed":
        return cfg.train.lam
    if rec.lam is None:
        raise ValueError(f"{rec.name}: informed training needs a per-scene lambda")
    return rec.lam


def train_model(recordings, mode, cfg, encoder=None):
    """Train the classifier on encodings at the mode's regularization levels."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    encoder = encoder or Encoder(load_geometry(cfg.geometry), cfg.order)
    acfg = analysis_config(cfg)
    feats = [recording_features(r, encoder, [training_lambda(r, mode, cfg)], acfg)[0] for r in recordings]
    svs, labels, groups = train_features(feats)
    return dpd.classifier_train(svs, labels, cfg.classifier, groups=groups), feats


@dataclass
class SweepFeatures:
    """Test-set features keyed by ``(seed, lam)``, each a list over scenes."""

    feats: dict
    seeds: tuple
    lams: tuple


def sweep_features(test_sets, cfg, encoder=None):
    """``test_sets`` maps seed to a list of recordings."""
    encoder = encoder or Encoder(load_geometry(cfg.geometry), cfg.order)
    acfg = analysis_config(cfg)
    lams = tuple(sorted(set(cfg.test.lambdas) | set(cfg.test.mixed_lambdas)))
    feats = {}
    for seed, recs in test_sets.items():
        for rec in recs:
            for f in recording_features(rec, encoder, lams, acfg):
                feats.setdefault((seed, f.lam), []).append(f)
    return SweepFeatures(feats, tuple(test_sets), lams)


def band_label(band):
    return f"{band[0]:g}-{band[1]:g}"


@dataclass
class EvalReport:
    """Rows of the three sweep tables plus run metadata.

    Every row carries ``mode, lambda, fraction, band``.
    """

    fraction_rows: list = field(default_factory=list)
    band_rows: list = field(default_factory=list)
    comparison_rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def lookup(self, table, **key):
        rows = getattr(self, table)
        hits = [r for r in rows if all(r[k] == v for k, v in key.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {key}")
        return hits[0]


ROW_FIELDS = ("mode", "lambda", "fraction", "band", "error_deg", "num_bins", "num_seeds")


def _row(mode, lam, frac, band, errs, counts):
    return {
        "mode": mode,
        "lambda": lam,
        "fraction": float(frac),
        "band": band_label(band),
        "error_deg": float(np.mean(errs)),
        "num_bins": int(np.sum(counts)),
        "num_seeds": len(errs),
    }


def evaluate(models, tf, cfg):
    """Sweep-point errors for each mode in ``models`` (mode -> params).

    Per seed, the selected bins of all scenes are pooled into one mean
    error; table entries average that over seeds.
    """
    grid = music.SteeringGrid(cfg.order, cfg.grid_resolution_deg)
    te = cfg.test
    tables = {k: [ErrorTable(f, grid) for f in v] for k, v in tf.feats.items()}
    report = EvalReport()
    full = tuple(cfg.band)
    for mode, params in models.items():
        scores = {k: [score_bins(params, f, informed=mode == "informed") for f in v] for k, v in tf.feats.items()}

        def sweep(lams, frac, bands=None):
            errs, counts = [], []
            for seed in tf.seeds:
                T = [t for lam in lams for t in tables[(seed, lam)]]
                S = [s for lam in lams for s in scores[(seed, lam)]]
                e, n = pooled_error(T, S, frac, bands)
                errs.append(e)
                counts.append(n)
            return errs, counts

        for lam in te.lambdas:
            for frac in te.fractions:
                report.fraction_rows.append(_row(mode, float(lam), frac, full, *sweep([lam], frac)))
            for band in te.bands:
                report.band_rows.append(_row(mode, float(lam), te.band_fraction, band, *sweep([lam], te.band_fraction, [band])))
        mixed = "mixed:" + "/".join(f"{x:g}" for x in te.mixed_lambdas)
        for frac in te.fractions:
            report.comparison_rows.append(_row(mode, mixed, frac, full, *sweep(te.mixed_lambdas, frac)))
    report.meta = {
        "config_digest": cfg.digest(), "version": __version__, "modes": list(models),
        "seeds": list(tf.seeds), "lambdas": list(tf.lams),
    }
    return report


def band_spread(report, mode, band, lams):
    """Max minus min error over ``lams`` in one band of the per-band table."""
    errs = [report.lookup("band_rows", mode=mode, band=band_label(band), **{"lambda": float(l)})["error_deg"] for l in lams]
    return max(errs) - min(errs)


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_rows(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in ROW_FIELDS])


def write_report(report, out_dir, plots=True):
    """Write the sweep CSVs, metadata JSON and, optionally, PNG figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "fraction": out_dir / "error_vs_fraction.csv",
        "band": out_dir / "error_vs_band.csv",
        "comparison": out_dir / "informed_vs_uninformed.csv",
    }
    write_rows(report.fraction_rows, paths["fraction"])
    write_rows(report.band_rows, paths["band"])
    write_rows(report.comparison_rows, paths["comparison"])
    (out_dir / "report.json").write_text(json.dumps(report.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if plots:
        from . import plots as P

        paths["fraction_png"] = P.plot_fraction_curves(report.fraction_rows, out_dir / "error_vs_fraction.png")
        paths["band_png"] = P.plot_band_errors(report.band_rows, out_dir / "error_vs_band.png")
        paths["comparison_png"] = P.plot_comparison(report.comparison_rows, out_dir / "informed_vs_uninformed.png")
    return paths


def run_experiment(cfg=ExperimentConfig(), geom=None):
    """In-memory end to end: simulate, train both modes, evaluate.

    Returns ``(report, models)`` where ``models`` maps mode to the training
    result.
    """
    geom = geom or load_geometry(cfg.geometry)
    encoder = Encoder(geom, cfg.order)
    models = {}
    for mode in MODES:
        recs = [record_scene(s, geom, cfg) for s in train_scenes(cfg, mode)]
        models[mode], _ = train_model(recs, mode, cfg, encoder)
    test_sets = {seed: [record_scene(s, geom, cfg) for s in eval_scenes(cfg, seed)] for seed in cfg.test.seeds}
    tf = sweep_features(test_sets, cfg, encoder)
    report = evaluate({m: r.params for m, r in models.items()}, tf, cfg)
    return report, models


# --- trade-off curves and external recordings -------------------------------


def tradeoff(encoder, freqs, lams):
    """Noise gain and plane-wave distortion, each ``(len(lams), len(freqs))``."""
    g = np.array([encoder.noise_gains(freqs, RegularizationProfile("tikhonov", lam)) for lam in lams])
    d = np.array([encoder.plane_wave_distortions(freqs, RegularizationProfile("tikhonov", lam)) for lam in lams])
    return g, d


def write_tradeoff(freqs, lams, g, d, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "frequency_hz", "noise_gain", "distortion"])
        for i, lam in enumerate(lams):
            for j, f in enumerate(freqs):
                w.writerow([repr(float(lam)), repr(float(f)), repr(float(g[i, j])), repr(float(d[i, j]))])


class IngestError(ValueError):
    pass


def ingest(wav_path, geom, lam, cfg=ExperimentConfig()):
    """Encode an external array recording at ``lam``.

    Returns the Ambisonics STFT tensor and the bin features used by
    ``evaluate``. The recording must match the geometry's channel count and
    the configured sample rate; no resampling is done.
    """
    rate, x = read_wav(wav_path)
    x = np.atleast_2d(x.T).T
    if x.shape[1] != geom.num_mics:
        raise IngestError(f"{wav_path}: {x.shape[1]} channels, geometry has {geom.num_mics} microphones")
    if rate != cfg.sample_rate:
        raise IngestError(f"{wav_path}: sample rate {rate} Hz, expected {cfg.sample_rate} Hz")
    encoder = Encoder(geom, cfg.order)
    an = SceneAnalyzer(x, encoder, analysis_config(cfg))
    feats = an.features(lam)
    feats.name = Path(wav_path).stem
    feats.meta.update(lam=float(lam), source=str(wav_path), sample_rate=rate, num_mics=geom.num_mics)
    return an.ambisonics(lam), feats


def write_features(feats, path):
    """Bin features as ``.npz`` with a JSON sidecar of the metadata."""
    st = feats.stats
    np.savez(path, frames=st.frames, bins=st.bins, bin_hz=st.bin_hz, svs=st.svs, principal=st.principal, dist=feats.dist_pw)
    side = Path(path).with_suffix(".json")
    side.write_text(json.dumps(dict(feats.meta, name=feats.name, version=__version__), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return side

"""Matplotlib renderings of the report tables, written to image files."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = dict(dpi=120, bbox_inches="tight", metadata={"Software": None})


def _save(fig, path):
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_tradeoff(freqs, lams, noise_gain, dist, path):
    """Noise gain (dB) and plane-wave distortion against frequency, one line per lambda.

    ``noise_gain`` and ``dist`` are ``(len(lams), len(freqs))``.
    """
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for lam, g, d in zip(lams, noise_gain, dist):
        ax1.plot(freqs, 10 * np.log10(g), label=f"λ={lam:g}")
        ax2.plot(freqs, d, label=f"λ={lam:g}")
    ax1.set(xlabel="frequency [Hz]", ylabel="noise gain [dB]")
    ax2.set(xlabel="frequency [Hz]", ylabel="distortion", ylim=(0, 1))
    ax2.legend(fontsize=7)
    return _save(fig, path)


def _by(rows, key):
    out = {}
    for r in rows:
        out.setdefault(r[key], []).append(r)
    return out


def plot_fraction_curves(rows, path):
    """Error against selected-bin percentage, one line per (mode, lambda)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for mode, mrows in _by(rows, "mode").items():
        style = "-" if mode == "uninformed" else "--"
        for lam, lrows in _by(mrows, "lambda").items():
            lrows = sorted(lrows, key=lambda r: r["fraction"])
            ax.plot([r["fraction"] for r in lrows], [r["error_deg"] for r in lrows], style, marker="o", ms=3,
                    label=f"{mode[0].upper()} λ={lam:g}")
    ax.set(xlabel="top selected bins [%]", ylabel="mean DOA error [deg]")
    ax.legend(fontsize=6, ncol=2)
    return _save(fig, path)


def plot_band_errors(rows, path):
    """Grouped bars: error per frequency band, one bar per lambda."""
    modes = _by(rows, "mode")
    fig, axes = plt.subplots(1, len(modes), figsize=(5 * len(modes), 3.5), squeeze=False)
    for ax, (mode, mrows) in zip(axes[0], modes.items()):
        bands = list(dict.fromkeys(r["band"] for r in mrows))
        lams = list(dict.fromkeys(r["lambda"] for r in mrows))
        width = 0.8 / len(lams)
        x = np.arange(len(bands))
        for i, lam in enumerate(lams):
            err = {r["band"]: r["error_deg"] for r in mrows if r["lambda"] == lam}
            ax.bar(x + i * width, [err[b] for b in bands], width, label=f"λ={lam:g}")
        ax.set_xticks(x + 0.4 - width / 2, bands, fontsize=7)
        ax.set(xlabel="band [Hz]", ylabel="mean DOA error [deg]", title=mode)
        ax.legend(fontsize=6)
    return _save(fig, path)


def plot_comparison(rows, path):
    """Informed against uninformed error on the mixed-lambda set."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for mode, mrows in _by(rows, "mode").items():
        mrows = sorted(mrows, key=lambda r: r["fraction"])
        ax.plot([r["fraction"] for r in mrows], [r["error_deg"] for r in mrows], marker="o", label=mode)
    ax.set(xlabel="top selected bins [%]", ylabel="mean DOA error [deg]")
    ax.legend()
    return _save(fig, path)
